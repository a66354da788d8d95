"""Reactive rescheduling under a real-time energy-reduction order.

Technique 1 keeps every machine and job sequence and only changes the speed
of operations that have not started at the reschedule instant.  Technique 2
additionally swaps adjacent pending operations on a machine.  Operations that
have started (finished or still running) keep their placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .energy import RescheduleOrder
from .jobshop import Instance, Placement, Schedule

__all__ = [
    "RescheduleOrder", "RescheduleResult", "Technique", "energy_budget", "technique1",
    "technique2", "reschedule", "rebuild", "meets_budget", "energy_budget_for",
]

_EPS_DWH = 1e-6


class Technique(str, Enum):
    SPEED_ONLY = "speed_only"
    PERMUTATION = "permutation"


@dataclass(frozen=True)
class RescheduleResult:
    schedule: Schedule
    penalty: bool
    technique_used: Technique
    energy_budget_wh: float
    energy_trace: tuple[float, ...] = field(default=(), compare=False)
    evaluations: int = field(default=0, compare=False)


def energy_budget(predictive: Schedule, order: RescheduleOrder) -> float:
    """Energy allowed after the order, in Wh: the predictive total scaled down."""
    return (1.0 - order.taux_energy_pct / 100.0) * predictive.total_energy_wh


def energy_budget_for(
    predictive: Schedule, order: RescheduleOrder, instance: Instance, baseline: str = "total"
) -> float:
    """Like :func:`energy_budget`; ``baseline="suffix"`` scales only the
    energy of operations not finished at the reschedule instant."""
    if baseline == "total":
        return energy_budget(predictive, order)
    if baseline != "suffix":
        raise ValueError(f"unknown budget baseline {baseline!r}")
    keep = 1.0 - order.taux_energy_pct / 100.0
    t = order.time_resch_s
    prefix = sum(instance.op(*p.key).energy_dwh(p.speed) for p in predictive.placements if p.end_s <= t)
    suffix = predictive.total_energy_dwh - prefix
    return (prefix + keep * suffix) / 10


def meets_budget(energy_dwh: int, budget_wh: float) -> bool:
    return energy_dwh <= budget_wh * 10 + _EPS_DWH


def rebuild(
    instance: Instance,
    predictive: Schedule,
    time_resch_s: float,
    machine_seqs: dict[int, list[tuple[int, int]]],
    speeds: dict[tuple[int, int], int],
) -> Optional[Schedule]:
    """Semi-active re-placement of operations not started at ``time_resch_s``.

    Started placements are copied verbatim.  Returns None when the machine
    sequences and job routings form a cycle.
    """
    t = time_resch_s
    by_key = predictive.by_key()
    frozen = {k: p for k, p in by_key.items() if p.start_s < t}
    pending = [k for k in by_key if k not in frozen]

    m_ready = {m: 0 for m in range(instance.num_machines)}
    j_ready = {j: 0 for j in range(instance.num_jobs)}
    for p in frozen.values():
        m_ready[p.machine] = max(m_ready[p.machine], p.end_s)
        j_ready[p.job] = max(j_ready[p.job], p.end_s)

    preds: dict[tuple[int, int], list[tuple[int, int]]] = {k: [] for k in pending}
    succs: dict[tuple[int, int], list[tuple[int, int]]] = {k: [] for k in pending}
    for seq in machine_seqs.values():
        live = [k for k in seq if k not in frozen]
        for a, b in zip(live, live[1:]):
            preds[b].append(a)
            succs[a].append(b)
    for (j, r) in pending:
        if (j, r - 1) in preds:
            preds[(j, r)].append((j, r - 1))
            succs[(j, r - 1)].append((j, r))

    indeg = {k: len(v) for k, v in preds.items()}
    ready = sorted(k for k, d in indeg.items() if d == 0)
    end: dict[tuple[int, int], int] = {}
    placements = list(frozen.values())
    while ready:
        k = ready.pop()
        op = instance.op(*k)
        v = speeds[k]
        start = max(t, m_ready[op.machine], j_ready[op.job], *(end[q] for q in preds[k]))
        start = math.ceil(start)
        end[k] = start + op.duration(v)
        placements.append(Placement(op.job, op.rank, op.machine, v, start, end[k]))
        for s in succs[k]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if len(end) != len(pending):
        return None
    return Schedule.build(placements, instance)


def _changeable(predictive: Schedule, t: float) -> list[Placement]:
    return [p for p in predictive.placements if p.start_s >= t]


def _unchanged(predictive: Schedule, budget: float, technique: Technique) -> RescheduleResult:
    return RescheduleResult(
        predictive,
        penalty=not meets_budget(predictive.total_energy_dwh, budget),
        technique_used=technique,
        energy_budget_wh=budget,
        energy_trace=(predictive.total_energy_wh,),
    )


def technique1(
    predictive: Schedule, order: RescheduleOrder, instance: Instance, baseline: str = "total"
) -> RescheduleResult:
    """Speed-only greedy; sequences are untouched."""
    budget = energy_budget_for(predictive, order, instance, baseline)
    if meets_budget(predictive.total_energy_dwh, budget):
        return _unchanged(predictive, budget, Technique.SPEED_ONLY)

    t = order.time_resch_s
    speeds = {p.key: p.speed for p in predictive.placements}
    energy = predictive.total_energy_dwh
    trace = [energy / 10]

    def saving(p: Placement) -> int:
        op = instance.op(*p.key)
        return op.energy_dwh(p.speed) - min(e for _, e in op.profile)

    candidates = sorted(_changeable(predictive, t), key=lambda p: (-saving(p), p.start_s, p.job, p.rank))
    met = False
    for p in candidates:
        op = instance.op(*p.key)
        cur = op.energy_dwh(speeds[p.key])
        levels = range(1, instance.max_speed + 1)
        enough = [v for v in levels if op.energy_dwh(v) < cur
                  and meets_budget(energy - cur + op.energy_dwh(v), budget)]
        if enough:
            # smallest energy cut that closes the gap; faster speed on ties
            v = max(enough, key=lambda v: (op.energy_dwh(v), v))
            met = True
        else:
            v = min(levels, key=lambda v: (op.energy_dwh(v), op.duration(v)))
            if op.energy_dwh(v) >= cur:
                continue
        energy += op.energy_dwh(v) - cur
        speeds[p.key] = v
        trace.append(energy / 10)
        if met:
            break

    schedule = rebuild(instance, predictive, t, predictive.machine_sequences(), speeds)
    assert schedule is not None  # unchanged sequences cannot create a cycle
    return RescheduleResult(schedule, not met, Technique.SPEED_ONLY, budget, tuple(trace))


def _neighbours(
    seqs: dict[int, list[tuple[int, int]]],
    speeds: dict[tuple[int, int], int],
    movable: list[tuple[int, int]],
    max_speed: int,
) -> Iterable[tuple[dict, dict]]:
    movable_set = set(movable)
    for k in movable:
        for v in range(1, max_speed + 1):
            if v != speeds[k]:
                s2 = dict(speeds)
                s2[k] = v
                yield seqs, s2
    for m in sorted(seqs):
        seq = seqs[m]
        for i in range(len(seq) - 1):
            a, b = seq[i], seq[i + 1]
            if a in movable_set and b in movable_set and a[0] != b[0]:
                q = dict(seqs)
                q[m] = seq[:i] + [b, a] + seq[i + 2:]
                yield q, speeds


def technique2(
    predictive: Schedule,
    order: RescheduleOrder,
    instance: Instance,
    max_evals: Optional[int] = None,
    baseline: str = "total",
) -> RescheduleResult:
    """Best-improvement local search over adjacent swaps and speed levels.

    Score is (energy, makespan), so the search returns the lowest-energy
    schedule it visits; the penalty flag reports whether that meets the budget.
    """
    budget = energy_budget_for(predictive, order, instance, baseline)
    t = order.time_resch_s
    movable = sorted(p.key for p in _changeable(predictive, t))
    affected = [p for p in predictive.placements if p.end_s > t]
    if not movable:
        return _unchanged(predictive, budget, Technique.PERMUTATION)
    if max_evals is None:
        max_evals = 10 * len(affected) ** 2

    seqs = predictive.machine_sequences()
    speeds = {p.key: p.speed for p in predictive.placements}
    best = rebuild(instance, predictive, t, seqs, speeds)
    assert best is not None
    score = (best.total_energy_dwh, best.makespan_s)
    trace = [best.total_energy_wh]
    evals = 1
    while evals < max_evals:
        improved = None
        for q, s2 in _neighbours(seqs, speeds, movable, instance.max_speed):
            if evals >= max_evals:
                break
            cand = rebuild(instance, predictive, t, q, s2)
            evals += 1
            if cand is None:
                continue
            c_score = (cand.total_energy_dwh, cand.makespan_s)
            if c_score < score and (improved is None or c_score < improved[0]):
                improved = (c_score, cand, q, s2)
        if improved is None:
            break
        score, best, seqs, speeds = improved
        trace.append(best.total_energy_wh)

    return RescheduleResult(
        best,
        penalty=not meets_budget(best.total_energy_dwh, budget),
        technique_used=Technique.PERMUTATION,
        energy_budget_wh=budget,
        energy_trace=tuple(trace),
        evaluations=evals,
    )


def reschedule(
    predictive: Schedule, order: RescheduleOrder, instance: Instance, baseline: str = "total"
) -> RescheduleResult:
    first = technique1(predictive, order, instance, baseline)
    if not first.penalty:
        return first
    return technique2(predictive, order, instance, baseline=baseline)
