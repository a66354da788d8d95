"""Deterministic simulated-clock execution of a scenario."""

from __future__ import annotations

import heapq
import json
import statistics
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Union

import numpy as np

from ..agents import (
    AceAgent, AgentMessage, AoeAgent, AoeState, AouAgent, AouState, Solver, StepResult,
)
from ..energy import FilterState
from ..scenario import Scenario

Event = Union[str, AgentMessage]


class Agent(Protocol):
    name: str

    def initial_timers(self) -> list[tuple[str, float]]: ...
    def handle(self, event: Event, now_s: float) -> StepResult: ...
    def report(self) -> dict: ...


def factory_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 7919, index]).generate_state(1)[0])


def build_agent(scenario: Scenario, name: str, seed: int, solver: Optional[Solver] = None) -> Agent:
    for i, f in enumerate(scenario.factories):
        if f.name == name:
            return AouAgent(AouState(
                name=f.name, instance=f.instance, provider=f.provider,
                gamma=scenario.gamma0, alpha=scenario.alpha, p3_s=scenario.p3_s,
                pso_params=scenario.pso, seed=factory_seed(seed, i), ace=scenario.ace,
                budget_baseline=scenario.budget_baseline,
            ), solver=solver)
    for p in scenario.providers:
        if p.name == name:
            subs = tuple(f.name for f in scenario.factories if p.name in f.subscribes)
            return AoeAgent(AoeState(
                name=p.name, source=p.source, capacity_wh=p.capacity_wh,
                filter=FilterState.initial(scenario.p2_s, scenario.p2_cap_factor),
                p1_s=scenario.p1_s, trace=p.trace, subscribers=subs,
            ))
    if name == scenario.ace:
        return AceAgent(name)
    raise KeyError(f"scenario has no agent named {name!r}")


def build_agents(scenario: Scenario, seed: int, solver: Optional[Solver] = None) -> dict[str, Agent]:
    return {n: build_agent(scenario, n, seed, solver) for n in scenario.agent_names()}


@dataclass(order=True)
class Timer:
    due_s: float
    owner: str
    kind: str  # "msg" sorts before "p1" < "p2" < "p3" < "start"
    seq: int
    message: Optional[AgentMessage] = field(default=None, compare=False)


class SimClock:
    """Timer queue dispatched in (due, owner, kind, insertion) order."""

    def __init__(self) -> None:
        self.now_s = 0.0
        self._heap: list[Timer] = []
        self._seq = 0

    def push(self, due_s: float, owner: str, kind: str, message: Optional[AgentMessage] = None) -> None:
        heapq.heappush(self._heap, Timer(due_s, owner, kind, self._seq, message))
        self._seq += 1

    def pop(self, horizon_s: float) -> Optional[Timer]:
        if not self._heap or self._heap[0].due_s > horizon_s:
            return None
        t = heapq.heappop(self._heap)
        self.now_s = t.due_s
        return t

    def __len__(self) -> int:
        return len(self._heap)


class Dispatch:
    """Bookkeeping shared by the simulated and distributed drivers."""

    def __init__(self, scenario: Scenario, names: list[str]):
        self.scenario = scenario
        self.names = set(names)
        self.clock = SimClock()
        self.events: list[list[Any]] = []
        self.faults: list[str] = []

    def seed_timers(self, name: str, timers: list[tuple[str, float]]) -> None:
        for kind, due in timers:
            self.clock.push(due, name, kind)

    def absorb(self, timer: Timer, result: StepResult) -> None:
        self.events.append([timer.due_s, timer.owner, timer.kind if timer.message is None
                            else f"msg:{timer.message.kind}"])
        self.faults.extend(result.faults)
        for kind, due in result.timers:
            self.clock.push(due, timer.owner, kind)
        for m in result.messages:
            if m.recipient not in self.names:
                self.faults.append(f"{timer.owner}: message to unknown agent {m.recipient!r}")
                continue
            self.clock.push(timer.due_s + self.scenario.latency_s, m.recipient, "msg", m)


def run_simulation(scenario: Scenario, seed: Optional[int] = None, solver: Optional[Solver] = None) -> dict:
    """Run negotiation then the online phase up to ``scenario.horizon_s``."""
    seed = scenario.seed if seed is None else seed
    agents = build_agents(scenario, seed, solver)
    d = Dispatch(scenario, list(agents))
    for name, a in agents.items():
        d.seed_timers(name, a.initial_timers())
    while (timer := d.clock.pop(scenario.horizon_s)) is not None:
        event = timer.message if timer.message is not None else timer.kind
        d.absorb(timer, agents[timer.owner].handle(event, timer.due_s))
    return assemble_report(scenario, seed, {n: a.report() for n, a in agents.items()}, d.events, d.faults)


def assemble_report(scenario: Scenario, seed: int, fragments: dict[str, dict],
                    events: list, faults: list[str]) -> dict:
    negotiation, reactive = [], []
    for f in scenario.factories:
        frag = fragments[f.name]
        negotiation += frag["negotiation"]
        reactive += frag["reactive"]
    return {
        "scenario": scenario.name,
        "seed": seed,
        "horizon_s": scenario.horizon_s,
        "negotiation": negotiation,
        "reactive": reactive,
        "factories": {f.name: fragments[f.name] for f in scenario.factories},
        "providers": {p.name: fragments[p.name] for p in scenario.providers},
        "ace": fragments[scenario.ace],
        "events": events,
        "faults": faults,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def summarize(report: dict) -> dict:
    """Per-factory final makespan/energy of a run."""
    out = {}
    for name, frag in report["factories"].items():
        final = frag["final"]
        out[name] = None if final is None else {"makespan_s": final["makespan_s"],
                                                "energy_wh": final["total_energy_wh"]}
    return out


def aggregate(scenario: Scenario, runs: list[dict]) -> dict:
    """Mean and best final makespan/energy per factory across runs."""
    out = {}
    for f in scenario.factories:
        finals = [summarize(r)[f.name] for r in runs]
        ok = [x for x in finals if x is not None]
        out[f.name] = {
            "runs": len(finals),
            "failed": len(finals) - len(ok),
            "mean_makespan_s": statistics.fmean(x["makespan_s"] for x in ok) if ok else None,
            "mean_energy_wh": statistics.fmean(x["energy_wh"] for x in ok) if ok else None,
            "best_makespan_s": min(x["makespan_s"] for x in ok) if ok else None,
            "best_energy_wh": min(x["energy_wh"] for x in ok) if ok else None,
        }
    return out


def run_repetitions(scenario: Scenario, solver: Optional[Solver] = None) -> dict:
    """``scenario.repetitions`` runs at seeds seed, seed+1, ... plus means."""
    runs = [run_simulation(scenario, scenario.seed + i, solver) for i in range(scenario.repetitions)]
    return {"runs": runs, "aggregate": aggregate(scenario, runs)}
