"""Predictive scheduler: discrete PSO over random keys plus speed genes.

A particle's keys are sorted ascending (ties by job, then rank) and read as a
job-repetition sequence: the k-th smallest key belonging to job ``j`` means
"schedule job j's next unscheduled operation".  Each operation also carries a
continuous speed coordinate, rounded and clamped to ``[1, max_speed]``.
Decoding is semi-active list scheduling, so every particle maps to a
feasible schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .jobshop import Instance, Placement, Schedule


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 30
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    neighborhood_size: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.neighborhood_size < self.swarm_size:
            raise ValueError("neighborhood_size must be < swarm_size")

    @classmethod
    def from_mapping(cls, data: dict) -> "PsoParams":
        aliases = {"w": "inertia", "c1": "cognitive", "c2": "social", "swarm": "swarm_size",
                   "neighborhood": "neighborhood_size"}
        kwargs = {}
        for k, v in data.items():
            k = aliases.get(k, k)
            if k not in cls.__dataclass_fields__:
                raise ValueError(f"unknown PSO parameter {k!r}")
            kwargs[k] = v
        return cls(**kwargs)


@dataclass(frozen=True)
class NormBounds:
    max_makespan_s: float
    max_energy_wh: float

    def __post_init__(self) -> None:
        if self.max_makespan_s <= 0 or self.max_energy_wh <= 0:
            raise ValueError("normalization bounds must be positive")


def normalization_bounds(instance: Instance) -> NormBounds:
    """Fully serial slowest makespan and all-worst-speed energy.

    Both are upper bounds over every feasible schedule, which keeps the
    weighted objective inside [0, 1].
    """
    mk = sum(max(d for d, _ in op.profile) for op in instance.operations)
    e = sum(max(e for _, e in op.profile) for op in instance.operations)
    return NormBounds(mk, e / 10)


def objective(makespan_s: float, energy_wh: float, gamma: float, bounds: NormBounds) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma * makespan_s / bounds.max_makespan_s + (1 - gamma) * energy_wh / bounds.max_energy_wh


@dataclass
class Particle:
    sequence_keys: np.ndarray
    speed_genes: np.ndarray
    velocity: Optional[np.ndarray] = None
    personal_best: Optional[tuple[np.ndarray, np.ndarray, float]] = None
    neighbors: frozenset[int] = field(default_factory=frozenset)


class Decoder:
    """Per-instance lookup tables for fast particle decoding."""

    def __init__(self, instance: Instance):
        self.instance = instance
        ops = instance.operations
        self.n = len(ops)
        self.jobs = np.array([op.job for op in ops], dtype=np.int64)
        self.ranks = np.array([op.rank for op in ops], dtype=np.int64)
        self._job_list = [op.job for op in ops]
        self._machine = [op.machine for op in ops]
        self._dur = [[d for d, _ in op.profile] for op in ops]
        self._energy = [[e for _, e in op.profile] for op in ops]
        self._first = []
        i = 0
        for job in instance.jobs:
            self._first.append(i)
            i += len(job)

    def sequence(self, keys: np.ndarray) -> list[int]:
        """Flat operation indices in decode order."""
        order = np.lexsort((self.ranks, self.jobs, keys))
        nxt = [0] * self.instance.num_jobs
        seq = []
        for k in order.tolist():
            j = self._job_list[k]
            seq.append(self._first[j] + nxt[j])
            nxt[j] += 1
        return seq

    def measure(self, keys: np.ndarray, speeds: np.ndarray) -> tuple[int, int]:
        """(makespan_s, energy_dwh) without materialising placements."""
        mready = [0] * self.instance.num_machines
        jready = [0] * self.instance.num_jobs
        sp = speeds.tolist()
        mk = 0
        energy = 0
        for i in self.sequence(keys):
            v = sp[i] - 1
            m = self._machine[i]
            j = self._job_list[i]
            start = mready[m] if mready[m] > jready[j] else jready[j]
            end = start + self._dur[i][v]
            mready[m] = end
            jready[j] = end
            if end > mk:
                mk = end
            energy += self._energy[i][v]
        return mk, energy

    def schedule(self, keys: np.ndarray, speeds: np.ndarray) -> Schedule:
        mready = [0] * self.instance.num_machines
        jready = [0] * self.instance.num_jobs
        sp = speeds.tolist()
        placements = []
        for i in self.sequence(keys):
            v = sp[i]
            m = self._machine[i]
            j = self._job_list[i]
            start = max(mready[m], jready[j])
            end = start + self._dur[i][v - 1]
            mready[m] = end
            jready[j] = end
            placements.append(Placement(j, int(self.ranks[i]), m, v, start, end))
        return Schedule.build(placements, self.instance)


def decode(particle: Particle, instance: Instance) -> Schedule:
    keys = np.asarray(particle.sequence_keys, dtype=float)
    speeds = np.asarray(particle.speed_genes, dtype=np.int64)
    if keys.shape != (instance.num_operations,) or speeds.shape != keys.shape:
        raise ValueError("particle dimensions do not match the instance operation count")
    if speeds.min() < 1 or speeds.max() > instance.max_speed:
        raise ValueError("speed genes outside [1, max_speed]")
    return Decoder(instance).schedule(keys, speeds)


def _ring_neighbors(i: int, size: int, k: int) -> frozenset[int]:
    if k <= 0 or size <= 1:
        return frozenset()
    out = set()
    for d in range(1, k // 2 + 1):
        out.add((i + d) % size)
        out.add((i - d) % size)
    if k % 2:
        out.add((i + k // 2 + 1) % size)
    out.discard(i)
    return frozenset(out)


class Swarm:
    """Array-backed swarm; ``step`` performs one velocity/position/evaluation round."""

    def __init__(self, instance: Instance, gamma: float, params: PsoParams):
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        self.instance = instance
        self.gamma = gamma
        self.params = params
        self.bounds = normalization_bounds(instance)
        self.decoder = Decoder(instance)
        self.rng = np.random.Generator(np.random.PCG64(params.seed))

        s, n, vmax = params.swarm_size, instance.num_operations, instance.max_speed
        self.key_vmax = 1.0
        self.speed_vmax = max(1.0, (vmax - 1) / 2)
        self.keys = self.rng.random((s, n))
        self.speed_pos = self.rng.uniform(0.5, vmax + 0.5, (s, n))
        self.key_vel = self.rng.uniform(-0.1, 0.1, (s, n))
        self.speed_vel = self.rng.uniform(-0.5, 0.5, (s, n))
        self.neighbors = [_ring_neighbors(i, s, params.neighborhood_size) for i in range(s)]
        self._nbr_idx = [np.array(sorted(nb | {i})) for i, nb in enumerate(self.neighbors)]

        self.fitness = self._evaluate()
        self.pbest_keys = self.keys.copy()
        self.pbest_speed = self.speed_pos.copy()
        self.pbest_f = self.fitness.copy()
        self.iteration = 1
        self.history = [self.best_fitness]

    def speeds(self) -> np.ndarray:
        v = np.floor(self.speed_pos + 0.5).astype(np.int64)
        return np.clip(v, 1, self.instance.max_speed)

    def fitness_of(self, mk: int, energy_dwh: int) -> float:
        return objective(mk, energy_dwh / 10, self.gamma, self.bounds)

    def _evaluate(self) -> np.ndarray:
        speeds = self.speeds()
        out = np.empty(len(self.keys))
        for i in range(len(self.keys)):
            mk, e = self.decoder.measure(self.keys[i], speeds[i])
            out[i] = self.fitness_of(mk, e)
        return out

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.pbest_f))

    @property
    def best_fitness(self) -> float:
        return float(self.pbest_f[self.best_index])

    def particle(self, i: int) -> Particle:
        return Particle(
            sequence_keys=self.keys[i].copy(),
            speed_genes=self.speeds()[i].copy(),
            velocity=self.key_vel[i].copy(),
            personal_best=(self.pbest_keys[i].copy(), self.pbest_speed[i].copy(), float(self.pbest_f[i])),
            neighbors=self.neighbors[i],
        )

    def step(self) -> None:
        p = self.params
        s, n = self.keys.shape
        nbest = np.array([idx[np.argmin(self.pbest_f[idx])] for idx in self._nbr_idx])
        r1, r2, r3, r4 = (self.rng.random((s, n)) for _ in range(4))

        self.key_vel = (p.inertia * self.key_vel
                        + p.cognitive * r1 * (self.pbest_keys - self.keys)
                        + p.social * r2 * (self.pbest_keys[nbest] - self.keys))
        np.clip(self.key_vel, -self.key_vmax, self.key_vmax, out=self.key_vel)
        self.keys = self.keys + self.key_vel

        self.speed_vel = (p.inertia * self.speed_vel
                          + p.cognitive * r3 * (self.pbest_speed - self.speed_pos)
                          + p.social * r4 * (self.pbest_speed[nbest] - self.speed_pos))
        np.clip(self.speed_vel, -self.speed_vmax, self.speed_vmax, out=self.speed_vel)
        self.speed_pos = np.clip(self.speed_pos + self.speed_vel, 1.0, float(self.instance.max_speed))

        self.fitness = self._evaluate()
        improved = self.fitness < self.pbest_f
        self.pbest_keys[improved] = self.keys[improved]
        self.pbest_speed[improved] = self.speed_pos[improved]
        self.pbest_f[improved] = self.fitness[improved]
        self.iteration += 1
        self.history.append(self.best_fitness)

    def best_schedule(self) -> Schedule:
        i = self.best_index
        speeds = np.clip(np.floor(self.pbest_speed[i] + 0.5).astype(np.int64), 1, self.instance.max_speed)
        return self.decoder.schedule(self.pbest_keys[i], speeds)


class PsoResult(NamedTuple):
    schedule: Schedule
    fitness: float
    history: list[float]


def pso_run(instance: Instance, gamma: float, params: Optional[PsoParams] = None) -> PsoResult:
    """Best schedule found for weight ``gamma``.

    ``params.iterations`` counts evaluation rounds, the initial swarm included.
    """
    params = params or PsoParams()
    swarm = Swarm(instance, gamma, params)
    while swarm.iteration < params.iterations:
        swarm.step()
    schedule = swarm.best_schedule()
    f = objective(schedule.makespan_s, schedule.total_energy_wh, gamma, swarm.bounds)
    return PsoResult(schedule, f, swarm.history)
