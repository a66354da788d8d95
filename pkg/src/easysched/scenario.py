"""Scenario files: a TOML description of factories, providers and run settings.

Example::

    name = "demo"
    seed = 7
    horizon_s = 60

    [periods]
    p1 = 3
    p2 = 6
    p3 = 8

    [pso]
    swarm_size = 20
    iterations = 60

    [[factory]]
    name = "aou1"
    instance = "instances/3x5x10.txt"   # relative to this file
    provider = "aoe1"

    [[provider]]
    name = "aoe1"
    kind = "wind"                        # or "pv"
    capacity_wh = 1200.0
    trace = "traces/step.csv"
    rotor_area_m2 = 10.0
    wind_speed_ms = 8.0
    baseline = { temperature_c = 19.0, humidity_pct = 36.0 }
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .energy import STANDARD_PRESSURE_PA, PvSource, SensorSample, WindSourceConfig, load_sensor_trace
from .jobshop import Instance, load_instance
from .pso import PsoParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ScenarioError(ValueError):
    """Collects every validation problem found in a scenario file."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(problems))


@dataclass(frozen=True)
class FactorySpec:
    name: str
    instance: Instance
    provider: str
    subscribes: tuple[str, ...]
    instance_path: str = ""


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    source: Union[WindSourceConfig, PvSource]
    capacity_wh: float
    trace: tuple[SensorSample, ...] = ()
    trace_path: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    factories: tuple[FactorySpec, ...]
    providers: tuple[ProviderSpec, ...]
    seed: int = 0
    repetitions: int = 1
    horizon_s: float = 120.0
    gamma0: float = 1.0
    alpha: float = 0.1
    p1_s: float = 3.0
    p2_s: float = 6.0
    p3_s: float = 8.0
    p2_cap_factor: float = 100.0
    latency_s: float = 0.0
    budget_baseline: str = "total"
    pso: PsoParams = field(default_factory=PsoParams)
    ace: str = "ace"
    peers: dict[str, str] = field(default_factory=dict, compare=False)

    def agent_names(self) -> list[str]:
        return [f.name for f in self.factories] + [p.name for p in self.providers] + [self.ace]


_TOP_KEYS = {"name", "seed", "repetitions", "horizon_s", "gamma0", "alpha", "latency_s",
             "budget_baseline", "periods", "pso", "factory", "provider", "ace", "peers"}


def load_scenario(path: Union[str, Path], overrides: Optional[dict[str, Any]] = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError([f"scenario not found: {path}"])
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from None
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(data.get(k), dict):
            data[k] = {**data[k], **v}
        else:
            data[k] = v
    return parse_scenario(data, base_dir=path.parent, default_name=path.stem)


def parse_scenario(data: dict[str, Any], base_dir: Path = Path("."), default_name: str = "scenario") -> Scenario:
    problems: list[str] = []
    for k in data:
        if k not in _TOP_KEYS:
            problems.append(f"unknown top-level key {k!r}")

    periods = data.get("periods", {})
    p1 = float(periods.get("p1", 3))
    p2 = float(periods.get("p2", 6))
    p3 = float(periods.get("p3", 8))
    cap = float(periods.get("p2_cap_factor", 100))
    if min(p1, p2, p3) <= 0:
        problems.append("periods must be positive")
    if not p1 < p2:
        problems.append(f"p2 ({p2}) must be longer than p1 ({p1})")

    try:
        pso = PsoParams.from_mapping(data.get("pso", {}))
    except (TypeError, ValueError) as exc:
        problems.append(f"pso: {exc}")
        pso = PsoParams()

    repetitions = int(data.get("repetitions", 1))
    if repetitions < 1:
        problems.append("repetitions must be >= 1")
    gamma0 = float(data.get("gamma0", 1.0))
    alpha = float(data.get("alpha", 0.1))
    if not 0 <= gamma0 <= 1:
        problems.append("gamma0 must lie in [0, 1]")
    if alpha <= 0:
        problems.append("alpha must be positive")
    baseline = data.get("budget_baseline", "total")
    if baseline not in ("total", "suffix"):
        problems.append("budget_baseline must be 'total' or 'suffix'")

    providers = []
    for i, raw in enumerate(data.get("provider", [])):
        spec = _provider(raw, i, base_dir, problems)
        if spec is not None:
            providers.append(spec)
    provider_names = {p.name for p in providers}

    factories = []
    for i, raw in enumerate(data.get("factory", [])):
        spec = _factory(raw, i, base_dir, provider_names, problems)
        if spec is not None:
            factories.append(spec)
    if not factories:
        problems.append("scenario defines no [[factory]]")

    names = [f.name for f in factories] + [p.name for p in providers] + [data.get("ace", "ace")]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        problems.append(f"duplicate agent names: {dupes}")

    if problems:
        raise ScenarioError(problems)
    return Scenario(
        name=str(data.get("name", default_name)),
        factories=tuple(factories),
        providers=tuple(providers),
        seed=int(data.get("seed", 0)),
        repetitions=repetitions,
        horizon_s=float(data.get("horizon_s", 120)),
        gamma0=gamma0,
        alpha=alpha,
        p1_s=p1, p2_s=p2, p3_s=p3, p2_cap_factor=cap,
        latency_s=float(data.get("latency_s", 0.0)),
        budget_baseline=baseline,
        pso=pso,
        ace=str(data.get("ace", "ace")),
        peers={str(k): str(v) for k, v in data.get("peers", {}).items()},
    )


def _read(base_dir: Path, rel: str, what: str, problems: list[str]) -> Optional[str]:
    p = (base_dir / rel).resolve()
    if not p.exists():
        problems.append(f"{what} not found: {rel}")
        return None
    return p.read_text(encoding="utf-8")


def _factory(raw: dict, i: int, base_dir: Path, providers: set[str], problems: list[str]) -> Optional[FactorySpec]:
    name = raw.get("name", f"aou{i + 1}")
    where = f"factory {name!r}"
    if "instance" not in raw:
        problems.append(f"{where}: missing 'instance'")
        return None
    text = _read(base_dir, raw["instance"], f"{where}: instance", problems)
    provider = raw.get("provider")
    if provider not in providers:
        problems.append(f"{where}: unknown provider {provider!r}")
    subscribes = tuple(raw.get("subscribes", [provider]))
    for s in subscribes:
        if s not in providers:
            problems.append(f"{where}: subscribes to unknown provider {s!r}")
    if text is None:
        return None
    try:
        inst = load_instance(text)
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None
    return FactorySpec(name, inst, str(provider), subscribes, raw["instance"])


def _provider(raw: dict, i: int, base_dir: Path, problems: list[str]) -> Optional[ProviderSpec]:
    name = raw.get("name", f"aoe{i + 1}")
    where = f"provider {name!r}"
    kind = raw.get("kind", "wind")
    if "capacity_wh" not in raw:
        problems.append(f"{where}: missing 'capacity_wh'")
        return None
    capacity = float(raw["capacity_wh"])
    try:
        if kind == "pv":
            return ProviderSpec(name, PvSource(float(raw.get("taux_pct", 10.0))), capacity)
        if kind != "wind":
            problems.append(f"{where}: unknown kind {kind!r}")
            return None
        base = raw.get("baseline", {})
        baseline = SensorSample(0.0, float(base.get("temperature_c", 19.0)), float(base.get("humidity_pct", 36.0)))
        cfg = WindSourceConfig(
            rotor_area_m2=float(raw.get("rotor_area_m2", 10.0)),
            wind_speed_ms=float(raw.get("wind_speed_ms", 8.0)),
            baseline=baseline,
            pressure_pa=float(raw.get("pressure_pa", STANDARD_PRESSURE_PA)),
            humidity_as_fraction=bool(raw.get("humidity_as_fraction", False)),
            deadband=float(raw.get("deadband", 0.0)),
        )
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None
    if "trace" not in raw:
        problems.append(f"{where}: wind provider needs a 'trace'")
        return None
    text = _read(base_dir, raw["trace"], f"{where}: trace", problems)
    if text is None:
        return None
    try:
        trace = tuple(load_sensor_trace(text))
    except (ValueError, KeyError) as exc:
        problems.append(f"{where}: bad trace: {exc}")
        return None
    return ProviderSpec(name, cfg, capacity, trace, raw["trace"])
