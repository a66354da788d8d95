from __future__ import annotations

import itertools
import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from easysched.jobshop import Instance, Operation, dump_instance, generate_instance, semi_active
from easysched.pso import normalization_bounds, objective
from easysched.scenario import parse_scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).resolve().parents[1] / "src" / "easysched" / "data"


def toy_instance() -> Instance:
    """2 jobs x 2 machines x 2 speeds; energies in 0.1 Wh."""
    return Instance(2, 2, 2, (
        (Operation(0, 0, 0, ((4, 30), (2, 50))), Operation(0, 1, 1, ((3, 20), (2, 35)))),
        (Operation(1, 0, 1, ((5, 40), (3, 60))), Operation(1, 1, 0, ((2, 10), (1, 18)))),
    ))


def all_sequences(instance: Instance):
    """Every routing-consistent operation order, as (job, rank) keys."""
    base = [j for j, ops in enumerate(instance.jobs) for _ in ops]
    seen = set()
    for perm in itertools.permutations(base):
        if perm in seen:
            continue
        seen.add(perm)
        nxt = [0] * instance.num_jobs
        keys = []
        for j in perm:
            keys.append((j, nxt[j]))
            nxt[j] += 1
        yield keys


def brute_force_optimum(instance: Instance, gamma: float) -> float:
    """Minimum weighted objective over all semi-active schedules x speed vectors."""
    bounds = normalization_bounds(instance)
    ops = instance.operations
    best = float("inf")
    for seq in all_sequences(instance):
        for speeds in itertools.product(range(1, instance.max_speed + 1), repeat=len(ops)):
            sp = {op.key: v for op, v in zip(ops, speeds)}
            s = semi_active(instance, seq, sp)
            best = min(best, objective(s.makespan_s, s.total_energy_wh, gamma, bounds))
    return best


def write_scenario_files(tmp_path: Path, trace_rows, instance: Instance | None = None) -> None:
    inst = instance or generate_instance(3, 4, 3, seed=5)
    (tmp_path / "inst.txt").write_text(dump_instance(inst))
    lines = ["t_s,temperature_c,humidity_pct"] + [",".join(str(x) for x in r) for r in trace_rows]
    (tmp_path / "trace.csv").write_text("\n".join(lines) + "\n")


def small_scenario(tmp_path: Path, trace_rows=((0, 19, 36), (22, 28, 33), (40, 19, 36)),
                   capacity_wh: float = 1e6, instance: Instance | None = None, **extra):
    write_scenario_files(tmp_path, trace_rows, instance)
    data = {
        "name": "small",
        "seed": 3,
        "horizon_s": 60,
        "pso": {"swarm_size": 8, "iterations": 15},
        "factory": [{"name": "aou1", "instance": "inst.txt", "provider": "aoe1"}],
        "provider": [{"name": "aoe1", "kind": "wind", "capacity_wh": capacity_wh, "trace": "trace.csv"}],
    }
    data.update(extra)
    return parse_scenario(data, base_dir=tmp_path)


@pytest.fixture
def toy():
    return toy_instance()


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
