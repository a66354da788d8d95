"""Renewable availability: wind physics, sensor traces, alarm filtering, PV source."""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence, Union

# Dry-air gas constant (J/(kg K)) and the vapour-correction constants of the
# density model.
R_DRY = 287.06
VAPOUR_COEFF = 230.617
MAGNUS_A = 17.5043
MAGNUS_B = 241.2
STANDARD_PRESSURE_PA = 101325.0


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class SensorSample:
    t_s: float
    temperature_c: float
    humidity_pct: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise ValueError(f"humidity {self.humidity_pct}% outside [0, 100]")
        if not -40.0 <= self.temperature_c <= 60.0:
            raise ValueError(f"temperature {self.temperature_c} C outside [-40, 60]")


@dataclass(frozen=True)
class WindSourceConfig:
    rotor_area_m2: float
    wind_speed_ms: float
    baseline: SensorSample
    pressure_pa: float = STANDARD_PRESSURE_PA
    # True reads humidity as a 0-1 fraction in the density formula.
    humidity_as_fraction: bool = False
    deadband: float = 0.0

    def __post_init__(self) -> None:
        if self.rotor_area_m2 <= 0 or self.wind_speed_ms <= 0 or self.pressure_pa <= 0:
            raise ValueError("rotor area, wind speed and pressure must be positive")
        if not 0.0 <= self.deadband < 1.0:
            raise ValueError("deadband must lie in [0, 1)")


@dataclass(frozen=True)
class EnergyAlarm:
    alarmed: bool
    ratio: float
    taux_energy_pct: float


def air_density(
    temperature_c: float,
    humidity_pct: float,
    pressure_pa: float = STANDARD_PRESSURE_PA,
    humidity_as_fraction: bool = False,
) -> float:
    """Moist-air density in kg/m^3."""
    phi = humidity_pct / 100.0 if humidity_as_fraction else humidity_pct
    vapour = VAPOUR_COEFF * phi * math.exp(MAGNUS_A * temperature_c / (MAGNUS_B + temperature_c))
    rho = (pressure_pa - vapour) / (R_DRY * (temperature_c + 273.15))
    if rho <= 0:
        raise DensityError("humidity term exceeds pressure")
    return rho


def wind_power(density: float, config: WindSourceConfig) -> float:
    return 0.5 * density * config.rotor_area_m2 * config.wind_speed_ms ** 3


def _density(sample: SensorSample, config: WindSourceConfig) -> float:
    return air_density(sample.temperature_c, sample.humidity_pct, config.pressure_pa,
                       config.humidity_as_fraction)


def alarm_from_ratio(ratio: float, deadband: float = 0.0) -> EnergyAlarm:
    if ratio < 1.0 - deadband:
        return EnergyAlarm(True, ratio, (1.0 - ratio) * 100.0)
    return EnergyAlarm(False, ratio, 0.0)


def detect(sample: SensorSample, config: WindSourceConfig) -> EnergyAlarm:
    # Area and wind speed are fixed per source, so P(t)/P(0) is a density ratio.
    ratio = _density(sample, config) / _density(config.baseline, config)
    return alarm_from_ratio(ratio, config.deadband)


@dataclass(frozen=True)
class PvSource:
    taux_pct: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.taux_pct <= 100.0:
            raise ValueError("PV reduction must lie in [0, 100]")


def pv_source_poll(source: Optional[PvSource] = None) -> EnergyAlarm:
    source = source or PvSource()
    if source.taux_pct <= 0:
        return EnergyAlarm(False, 1.0, 0.0)
    return EnergyAlarm(True, 1.0 - source.taux_pct / 100.0, source.taux_pct)


# -- false-alarm filter --------------------------------------------------------

@dataclass(frozen=True)
class FilterState:
    p2_s: float
    p2_initial_s: float
    time_resch_s: float = 0.0
    cap_factor: float = 100.0

    @classmethod
    def initial(cls, p2_s: float, cap_factor: float = 100.0) -> "FilterState":
        return cls(p2_s=p2_s, p2_initial_s=p2_s, cap_factor=cap_factor)


@dataclass(frozen=True)
class RescheduleOrder:
    time_resch_s: float
    taux_energy_pct: float
    source: str = ""

    def __post_init__(self) -> None:
        if self.time_resch_s < 0:
            raise ValueError("time_resch_s must be >= 0")
        if not 0.0 < self.taux_energy_pct <= 100.0:
            raise ValueError(f"taux_energy_pct {self.taux_energy_pct} outside (0, 100]")


@dataclass(frozen=True)
class NoPerturbation:
    pass


FilterAction = Union[RescheduleOrder, NoPerturbation]


def filter_alarm(
    state: FilterState, alarm: EnergyAlarm, now_s: Optional[float] = None, source: str = ""
) -> tuple[FilterState, FilterAction]:
    """One false-alarm verification window.

    The reschedule instant is one (pre-tripling) window after the current
    tick; ``now_s`` defaults to the filter's own clock.
    """
    base = state.time_resch_s if now_s is None else max(state.time_resch_s, now_s)
    if alarm.alarmed:
        time_resch = base + state.p2_s
        order = RescheduleOrder(time_resch, alarm.taux_energy_pct, source)
        p2 = min(3 * state.p2_s, state.cap_factor * state.p2_initial_s)
        return replace(state, p2_s=p2, time_resch_s=time_resch), order
    return replace(state, p2_s=state.p2_initial_s, time_resch_s=base), NoPerturbation()


# -- sensor traces -------------------------------------------------------------

def load_sensor_trace(text: str) -> list[SensorSample]:
    rows = csv.DictReader(io.StringIO(text))
    trace = [SensorSample(float(r["t_s"]), float(r["temperature_c"]), float(r["humidity_pct"]))
             for r in rows]
    _check_trace(trace)
    return trace


def _check_trace(trace: Sequence[SensorSample]) -> None:
    if not trace:
        raise ValueError("sensor trace is empty")
    for a, b in zip(trace, trace[1:]):
        if b.t_s < a.t_s:
            raise ValueError(f"trace timestamps decrease at t={b.t_s}")


def sample_at(trace: Sequence[SensorSample], t_s: float) -> SensorSample:
    """The reading in force at ``t_s`` (zero-order hold), restamped to ``t_s``."""
    times = [s.t_s for s in trace]
    i = bisect.bisect_right(times, t_s) - 1
    src = trace[max(i, 0)]
    return replace(src, t_s=t_s)


def replay_sensor_trace(
    trace: Sequence[SensorSample], p1_s: float, until_s: Optional[float] = None
) -> Iterator[SensorSample]:
    """Yield acquisitions at t = 0, p1, 2 p1, ... (inclusive of ``until_s``).

    Without ``until_s`` the replay stops after the last trace timestamp.
    """
    _check_trace(trace)
    if p1_s <= 0:
        raise ValueError("p1 must be positive")
    end = trace[-1].t_s if until_s is None else until_s
    k = 0
    while k * p1_s <= end:
        yield sample_at(trace, k * p1_s)
        k += 1
