"""Job-shop model with speed-scalable machines.

Times are integer seconds and energies are integer tenths of a watt-hour
(``dwh``) so that schedules replay bit-exactly.  Floats only appear at the
API edge (``*_wh`` properties).
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence


class InstanceError(ValueError):
    """Malformed instance text or an instance violating its invariants."""


class InfeasibleSchedule(ValueError):
    """A schedule violates one of the feasibility invariants."""


@dataclass(frozen=True)
class Operation:
    job: int
    rank: int
    machine: int
    # profile[v - 1] = (duration_s, energy_dwh) at speed level v
    profile: tuple[tuple[int, int], ...]

    def duration(self, speed: int) -> int:
        return self.profile[speed - 1][0]

    def energy_dwh(self, speed: int) -> int:
        return self.profile[speed - 1][1]

    def energy_wh(self, speed: int) -> float:
        return self.profile[speed - 1][1] / 10

    @property
    def key(self) -> tuple[int, int]:
        return (self.job, self.rank)


@dataclass(frozen=True)
class Instance:
    num_machines: int
    num_jobs: int
    max_speed: int
    jobs: tuple[tuple[Operation, ...], ...]

    def __post_init__(self) -> None:
        validate_instance(self)

    @property
    def operations(self) -> tuple[Operation, ...]:
        """All operations, flattened in (job, rank) order."""
        return tuple(op for job in self.jobs for op in job)

    @property
    def num_operations(self) -> int:
        return sum(len(job) for job in self.jobs)

    def op(self, job: int, rank: int) -> Operation:
        return self.jobs[job][rank]

    @property
    def name(self) -> str:
        return f"{self.num_machines}x{self.max_speed}x{self.num_jobs}"


def validate_instance(instance: Instance) -> None:
    if instance.num_machines < 1 or instance.num_jobs < 1 or instance.max_speed < 1:
        raise InstanceError("machine, job and speed counts must all be >= 1")
    if len(instance.jobs) != instance.num_jobs:
        raise InstanceError(
            f"header declares {instance.num_jobs} jobs but {len(instance.jobs)} are defined"
        )
    for j, ops in enumerate(instance.jobs):
        if not ops:
            raise InstanceError(f"job {j} has no operations")
        for r, op in enumerate(ops):
            where = f"operation (job {j}, rank {r})"
            if op.job != j or op.rank != r:
                raise InstanceError(f"{where} carries mismatched index ({op.job}, {op.rank})")
            if not 0 <= op.machine < instance.num_machines:
                raise InstanceError(f"{where}: machine index out of range ({op.machine})")
            if len(op.profile) != instance.max_speed:
                raise InstanceError(
                    f"{where}: speed table has {len(op.profile)} entries, expected {instance.max_speed}"
                )
            for v, (d, e) in enumerate(op.profile, start=1):
                if d <= 0 or e <= 0:
                    raise InstanceError(f"{where}: non-positive duration/energy at speed {v}")


# -- instance text format -----------------------------------------------------
#
#   m n Vmax
#   one block per job, blank-line separated:
#   machine d1 e1 d2 e2 ... dVmax eVmax      (one line per operation)
#
# Energies are written in tenths of a Wh.  '#' starts a comment.

def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def load_instance(text: str) -> Instance:
    lines = text.splitlines()
    header: Optional[tuple[int, int, int]] = None
    jobs: list[list[Operation]] = []
    current: list[Operation] = []

    def close_job() -> None:
        nonlocal current
        if current:
            jobs.append(current)
            current = []

    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            if header is not None:
                close_job()
            continue
        line = _strip(raw)
        if not line:
            continue
        try:
            nums = [int(tok) for tok in line.split()]
        except ValueError:
            raise InstanceError(f"line {lineno}: expected integers, got {line!r}") from None
        if header is None:
            if len(nums) != 3:
                raise InstanceError(f"line {lineno}: header must be 'm n Vmax'")
            header = (nums[0], nums[1], nums[2])
            continue
        m, n, vmax = header
        if len(nums) != 1 + 2 * vmax:
            raise InstanceError(
                f"line {lineno}: expected machine plus {vmax} (duration, energy) pairs, got {len(nums)} numbers"
            )
        machine = nums[0]
        if not 0 <= machine < m:
            raise InstanceError(
                f"line {lineno}: machine index out of range ({machine} not in [0, {m}))"
            )
        profile = tuple((nums[1 + 2 * i], nums[2 + 2 * i]) for i in range(vmax))
        current.append(Operation(len(jobs), len(current), machine, profile))
    close_job()
    if header is None:
        raise InstanceError("line 1: missing header")
    m, n, vmax = header
    return Instance(m, n, vmax, tuple(tuple(ops) for ops in jobs))


def dump_instance(instance: Instance) -> str:
    out = [f"{instance.num_machines} {instance.num_jobs} {instance.max_speed}"]
    for j, ops in enumerate(instance.jobs):
        out.append("")
        out.append(f"# job {j}")
        for op in ops:
            pairs = " ".join(f"{d} {e}" for d, e in op.profile)
            out.append(f"{op.machine} {pairs}")
    return "\n".join(out) + "\n"


def _strictly_monotone(values: list[int], increasing: bool) -> list[int]:
    # Ceil/round laws plateau for small base values; bump forward so the
    # trade-off stays strict.  Durations are repaired from the fast end.
    if increasing:
        for i in range(1, len(values)):
            values[i] = max(values[i], values[i - 1] + 1)
    else:
        for i in range(len(values) - 2, -1, -1):
            values[i] = max(values[i], values[i + 1] + 1)
    return values


def speed_profile(base_duration: int, base_energy_dwh: int, max_speed: int) -> tuple[tuple[int, int], ...]:
    """Duration/energy law used by the generator.

    ``duration(v) = ceil(d1 / v)`` and ``energy(v) = e1 * sqrt(v)`` rounded to
    0.1 Wh, then repaired to be strictly monotone.
    """
    durations = [math.ceil(base_duration / v) for v in range(1, max_speed + 1)]
    energies = [int(math.floor(base_energy_dwh * math.sqrt(v) + 0.5)) for v in range(1, max_speed + 1)]
    durations = _strictly_monotone(durations, increasing=False)
    energies = _strictly_monotone(energies, increasing=True)
    return tuple(zip(durations, energies))


def generate_instance(
    num_machines: int,
    num_jobs: int,
    max_speed: int,
    seed: int,
    duration_range: tuple[int, int] = (1, 99),
    energy_range_wh: tuple[float, float] = (1.0, 50.0),
) -> Instance:
    """Seeded job-shop instance where each job visits every machine once."""
    if min(num_machines, num_jobs, max_speed) < 1:
        raise ValueError("all counts must be >= 1")
    rng = random.Random(seed)
    lo_e, hi_e = (int(round(x * 10)) for x in energy_range_wh)
    jobs = []
    for j in range(num_jobs):
        routing = list(range(num_machines))
        rng.shuffle(routing)
        ops = []
        for r, machine in enumerate(routing):
            d1 = rng.randint(*duration_range)
            e1 = rng.randint(lo_e, hi_e)
            ops.append(Operation(j, r, machine, speed_profile(d1, e1, max_speed)))
        jobs.append(tuple(ops))
    return Instance(num_machines, num_jobs, max_speed, tuple(jobs))


# -- schedules ----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Placement:
    job: int
    rank: int
    machine: int
    speed: int
    start_s: int
    end_s: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.job, self.rank)


@dataclass(frozen=True)
class Schedule:
    placements: tuple[Placement, ...]
    makespan_s: int
    total_energy_dwh: int

    @property
    def total_energy_wh(self) -> float:
        return self.total_energy_dwh / 10

    @classmethod
    def build(cls, placements: Iterable[Placement], instance: Instance) -> "Schedule":
        ps = tuple(sorted(placements, key=lambda p: (p.machine, p.start_s, p.job, p.rank)))
        mk, e = _recompute(ps, instance)
        return cls(ps, mk, e)

    def by_key(self) -> dict[tuple[int, int], Placement]:
        return {p.key: p for p in self.placements}

    def machine_sequences(self) -> dict[int, list[tuple[int, int]]]:
        seqs: dict[int, list[tuple[int, int]]] = {}
        for p in sorted(self.placements, key=lambda p: (p.machine, p.start_s, p.job, p.rank)):
            seqs.setdefault(p.machine, []).append(p.key)
        return seqs

    def to_dict(self) -> dict:
        return {
            "makespan_s": self.makespan_s,
            "total_energy_wh": self.total_energy_wh,
            "placements": [
                {"job": p.job, "rank": p.rank, "machine": p.machine, "speed": p.speed,
                 "start_s": p.start_s, "end_s": p.end_s}
                for p in self.placements
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, instance: Instance) -> "Schedule":
        ps = [Placement(int(d["job"]), int(d["rank"]), int(d["machine"]), int(d["speed"]),
                        int(d["start_s"]), int(d["end_s"])) for d in data["placements"]]
        return cls.build(ps, instance)


def _recompute(placements: Sequence[Placement], instance: Instance) -> tuple[int, int]:
    mk = 0
    e = 0
    for p in placements:
        try:
            op = instance.op(p.job, p.rank)
        except IndexError:
            raise InfeasibleSchedule(f"placement {p.key} is not an operation of the instance") from None
        if not 1 <= p.speed <= instance.max_speed:
            raise InfeasibleSchedule(f"placement {p.key}: speed {p.speed} outside [1, {instance.max_speed}]")
        e += op.energy_dwh(p.speed)
        mk = max(mk, p.end_s)
    return mk, e


def check_feasible(schedule: Schedule, instance: Instance, complete: bool = True) -> None:
    """Raise InfeasibleSchedule naming the first violated invariant."""
    seen: dict[tuple[int, int], Placement] = {}
    for p in schedule.placements:
        if p.key in seen:
            raise InfeasibleSchedule(f"duplicate placement for operation {p.key}")
        try:
            op = instance.op(p.job, p.rank)
        except IndexError:
            raise InfeasibleSchedule(f"placement {p.key} is not an operation of the instance") from None
        if op.machine != p.machine:
            raise InfeasibleSchedule(f"operation {p.key} placed on machine {p.machine}, routed to {op.machine}")
        if not 1 <= p.speed <= instance.max_speed:
            raise InfeasibleSchedule(f"operation {p.key}: speed {p.speed} outside [1, {instance.max_speed}]")
        if p.start_s < 0:
            raise InfeasibleSchedule(f"operation {p.key} starts before time 0")
        if p.end_s != p.start_s + op.duration(p.speed):
            raise InfeasibleSchedule(
                f"duration mismatch for {p.key}: end {p.end_s} != start {p.start_s} + {op.duration(p.speed)}"
            )
        seen[p.key] = p
    if complete and len(seen) != instance.num_operations:
        missing = [op.key for op in instance.operations if op.key not in seen]
        raise InfeasibleSchedule(f"operations not placed: {missing[:5]}")

    by_machine: dict[int, list[Placement]] = {}
    for p in schedule.placements:
        by_machine.setdefault(p.machine, []).append(p)
    for m, ps in by_machine.items():
        ps.sort(key=lambda p: (p.start_s, p.end_s))
        for a, b in zip(ps, ps[1:]):
            if b.start_s < a.end_s:
                raise InfeasibleSchedule(f"machine overlap on machine {m}: {a.key} and {b.key}")

    for (j, r), p in seen.items():
        prev = seen.get((j, r - 1))
        if r > 0 and prev is None and complete:
            raise InfeasibleSchedule(f"operation {(j, r)} placed without its predecessor")
        if prev is not None and p.start_s < prev.end_s:
            raise InfeasibleSchedule(
                f"precedence violated in job {j}: rank {r} starts at {p.start_s} before rank {r - 1} ends at {prev.end_s}"
            )

    mk, e = _recompute(schedule.placements, instance)
    if mk != schedule.makespan_s or e != schedule.total_energy_dwh:
        raise InfeasibleSchedule(
            f"cached totals ({schedule.makespan_s}, {schedule.total_energy_dwh}) != recomputed ({mk}, {e})"
        )


def evaluate(schedule: Schedule, instance: Instance) -> tuple[int, float]:
    """Return ``(makespan_s, total_energy_wh)`` after checking feasibility."""
    check_feasible(schedule, instance, complete=False)
    mk, e = _recompute(schedule.placements, instance)
    return mk, e / 10


def affected_operations(schedule: Schedule, time_resch_s: int) -> frozenset[tuple[int, int]]:
    """Keys of placements still running or pending at ``time_resch_s``."""
    if time_resch_s < 0:
        raise ValueError("time_resch_s must be >= 0")
    return frozenset(p.key for p in schedule.placements if p.end_s > time_resch_s)


def semi_active(
    instance: Instance,
    sequence: Iterable[tuple[int, int]],
    speeds: dict[tuple[int, int], int],
) -> Schedule:
    """Place operations in ``sequence`` order at the earliest machine/job-ready time.

    ``sequence`` must list each job's operations in routing order.
    """
    machine_ready = [0] * instance.num_machines
    job_ready = [0] * instance.num_jobs
    placements = []
    for key in sequence:
        op = instance.op(*key)
        v = speeds[key]
        start = max(machine_ready[op.machine], job_ready[op.job])
        end = start + op.duration(v)
        machine_ready[op.machine] = end
        job_ready[op.job] = end
        placements.append(Placement(op.job, op.rank, op.machine, v, start, end))
    return Schedule.build(placements, instance)


# -- Gantt CSV ----------------------------------------------------------------

GANTT_HEADER = ("machine", "job", "rank", "speed", "start_s", "end_s")


def gantt_export(schedule: Schedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GANTT_HEADER)
    for p in sorted(schedule.placements, key=lambda p: (p.machine, p.start_s, p.job, p.rank)):
        w.writerow((p.machine, p.job, p.rank, p.speed, p.start_s, p.end_s))
    return buf.getvalue()


def gantt_parse(text: str, instance: Instance) -> Schedule:
    rows = list(csv.DictReader(io.StringIO(text)))
    ps = [Placement(int(r["job"]), int(r["rank"]), int(r["machine"]), int(r["speed"]),
                    int(r["start_s"]), int(r["end_s"])) for r in rows]
    return Schedule.build(ps, instance)


# -- perturbations ------------------------------------------------------------

class PerturbationKind(str, Enum):
    REPAIRABLE = "repairable"
    NON_REPAIRABLE = "non_repairable"


class ResourceClass(str, Enum):
    RENEWABLE = "renewable"
    CONSUMABLE = "consumable"


@dataclass(frozen=True)
class Perturbation:
    resource: str
    occurrence_s: float
    duration_s: float
    kind: PerturbationKind = PerturbationKind.REPAIRABLE
    resource_class: ResourceClass = ResourceClass.RENEWABLE

    def __post_init__(self) -> None:
        if self.occurrence_s < 0:
            raise ValueError("occurrence_s must be >= 0")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
