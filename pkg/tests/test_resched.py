import itertools

import pytest
from hypothesis import assume, given, strategies as st

from easysched.energy import RescheduleOrder
from easysched.jobshop import Instance, Operation, check_feasible, generate_instance, semi_active
from easysched.resched import (
    Technique, energy_budget, energy_budget_for, meets_budget, rebuild, reschedule, technique1,
    technique2,
)


@st.composite
def cases(draw, max_affected=6):
    inst = generate_instance(draw(st.integers(2, 3)), draw(st.integers(2, 3)), draw(st.integers(2, 3)),
                             draw(st.integers(0, 10_000)))
    order = draw(st.permutations([j for j, ops in enumerate(inst.jobs) for _ in ops]))
    nxt = [0] * inst.num_jobs
    seq = []
    for j in order:
        seq.append((j, nxt[j]))
        nxt[j] += 1
    speeds = {op.key: draw(st.integers(1, inst.max_speed)) for op in inst.operations}
    s = semi_active(inst, seq, speeds)
    t = draw(st.integers(0, s.makespan_s - 1))
    affected = [p for p in s.placements if p.end_s > t]
    assume(1 <= len(affected) <= max_affected)
    return inst, s, t


def fixed_sequence_min_energy(inst, s, t):
    """Exhaustive oracle: every speed vector over the not-yet-started operations."""
    pending = [p for p in s.placements if p.start_s >= t]
    fixed = sum(inst.op(*p.key).energy_dwh(p.speed) for p in s.placements if p.start_s < t)
    best = None
    for vs in itertools.product(range(1, inst.max_speed + 1), repeat=len(pending)):
        e = fixed + sum(inst.op(*p.key).energy_dwh(v) for p, v in zip(pending, vs))
        best = e if best is None else min(best, e)
    return best


def job_orders(schedule):
    return {j: [p.key for p in sorted(schedule.placements, key=lambda p: p.start_s) if p.job == j]
            for j in {p.job for p in schedule.placements}}


@given(cases())
def test_technique1_with_penalty_reaches_exhaustive_minimum(case):
    inst, s, t = case
    r = technique1(s, RescheduleOrder(t, 100.0), inst)
    oracle = fixed_sequence_min_energy(inst, s, t)
    assert r.schedule.total_energy_dwh == oracle
    assert r.penalty == (oracle > 0)


@given(cases(), st.floats(1, 60))
def test_technique1_budget_and_stability(case, taux):
    inst, s, t = case
    r = technique1(s, RescheduleOrder(t, taux), inst)
    check_feasible(r.schedule, inst)
    assert r.schedule.machine_sequences() == s.machine_sequences()
    assert job_orders(r.schedule) == job_orders(s)
    assert r.energy_budget_wh == pytest.approx((1 - taux / 100) * s.total_energy_wh)
    if not r.penalty:
        assert r.schedule.total_energy_wh <= r.energy_budget_wh + 1e-9
    else:
        assert r.schedule.total_energy_dwh == fixed_sequence_min_energy(inst, s, t)


@given(cases(), st.floats(1, 60))
def test_started_operations_are_never_modified(case, taux):
    inst, s, t = case
    before = {p.key: p for p in s.placements if p.start_s < t}
    for r in (technique1(s, RescheduleOrder(t, taux), inst), technique2(s, RescheduleOrder(t, taux), inst)):
        after = r.schedule.by_key()
        for k, p in before.items():
            assert after[k] == p
        assert all(p.start_s >= t for k, p in after.items() if k not in before)


@given(cases())
def test_technique2_feasible_and_reaches_energy_minimum(case):
    inst, s, t = case
    r = technique2(s, RescheduleOrder(t, 100.0), inst)
    check_feasible(r.schedule, inst)
    assert r.technique_used is Technique.PERMUTATION
    assert r.schedule.total_energy_dwh == fixed_sequence_min_energy(inst, s, t)
    assert list(r.energy_trace) == sorted(r.energy_trace, reverse=True)


def test_technique2_respects_evaluation_cap():
    inst = generate_instance(3, 4, 3, seed=8)
    s = semi_active(inst, [op.key for op in inst.operations], {op.key: 3 for op in inst.operations})
    r = technique2(s, RescheduleOrder(0, 50.0), inst, max_evals=5)
    assert r.evaluations <= 5


def test_reschedule_prefers_technique1():
    inst = generate_instance(3, 4, 3, seed=8)
    s = semi_active(inst, [op.key for op in inst.operations], {op.key: 3 for op in inst.operations})
    easy = reschedule(s, RescheduleOrder(10, 5.0), inst)
    assert easy.technique_used is Technique.SPEED_ONLY and not easy.penalty
    hard = reschedule(s, RescheduleOrder(10, 99.0), inst)
    assert hard.technique_used is Technique.PERMUTATION and hard.penalty


def test_budget_already_met_leaves_schedule_untouched():
    inst = generate_instance(2, 2, 2, seed=1)
    s = semi_active(inst, [op.key for op in inst.operations], {op.key: 1 for op in inst.operations})
    r = technique1(s, RescheduleOrder(0, 1.0), inst)
    # all ops already at their cheapest speed: penalty, schedule identical
    assert r.schedule == s and r.penalty


def test_energy_budget_baselines():
    inst = generate_instance(2, 2, 2, seed=1)
    s = semi_active(inst, [op.key for op in inst.operations], {op.key: 2 for op in inst.operations})
    order = RescheduleOrder(s.placements[0].end_s, 20.0)
    assert energy_budget(s, order) == pytest.approx(0.8 * s.total_energy_wh)
    done = sum(inst.op(*p.key).energy_wh(p.speed) for p in s.placements if p.end_s <= order.time_resch_s)
    assert energy_budget_for(s, order, inst, "suffix") == pytest.approx(done + 0.8 * (s.total_energy_wh - done))
    with pytest.raises(ValueError):
        energy_budget_for(s, order, inst, "bogus")


def test_meets_budget_tolerance():
    assert meets_budget(1000, 100.0)
    assert not meets_budget(1001, 100.0)


def test_rebuild_detects_cycles(toy):
    s = semi_active(toy, [(0, 0), (1, 0), (0, 1), (1, 1)], {op.key: 1 for op in toy.operations})
    # M0 runs (1,1) before (0,0) and M1 runs (0,1) before (1,0): job routing closes a cycle
    seqs = {0: [(1, 1), (0, 0)], 1: [(0, 1), (1, 0)]}
    assert rebuild(toy, s, 0, seqs, {op.key: 1 for op in toy.operations}) is None


def test_rebuild_rounds_fractional_instants_up(toy):
    s = semi_active(toy, [(0, 0), (1, 0), (0, 1), (1, 1)], {op.key: 1 for op in toy.operations})
    r = rebuild(toy, s, 4.5, s.machine_sequences(), {op.key: 1 for op in toy.operations})
    assert all(p.start_s >= 5 for p in r.placements if p.start_s >= 4.5)


def test_stability_toy_makespan_may_grow():
    # one machine, two jobs: slowing the pending op stretches the makespan
    inst = Instance(1, 2, 2, (
        (Operation(0, 0, 0, ((4, 10), (2, 30))),),
        (Operation(1, 0, 0, ((6, 20), (3, 40))),),
    ))
    s = semi_active(inst, [(0, 0), (1, 0)], {(0, 0): 2, (1, 0): 2})
    r = technique1(s, RescheduleOrder(2, 20.0), inst)
    assert not r.penalty
    assert r.schedule.makespan_s > s.makespan_s
    assert r.schedule.machine_sequences() == s.machine_sequences()
