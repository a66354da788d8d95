"""Factory (AOU), energy-provider (AOE) and energy-controller (ACE) agents.

Agent logic is written as pure step functions ``(state, event) -> (state,
actions)`` over frozen state records.  The ``*Agent`` classes at the bottom
own one state each and adapt the step functions to the timer/message events
delivered by the runtime; they are the only mutable objects here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .energy import (
    DensityError, EnergyAlarm, FilterState, NoPerturbation, PvSource, RescheduleOrder,
    SensorSample, WindSourceConfig, detect, filter_alarm, pv_source_poll, sample_at,
)
from .jobshop import Instance, Perturbation, Schedule
from .pso import PsoParams, pso_run
from .resched import reschedule

log = logging.getLogger(__name__)


class MsgKind(str, Enum):
    ENERGY_REQUEST = "energy_request"
    ENERGY_REPLY = "energy_reply"
    CONTROL_NO_PERTURBATION = "control_no_perturbation"
    CONTROL_RESCHEDULE = "control_reschedule"
    CONSUMPTION_REPORT = "consumption_report"


PROTOCOL_KINDS = frozenset(k.value for k in MsgKind)


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class AgentMessage:
    kind: str
    sender: str
    recipient: str
    sent_at_s: float
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        kind = self.kind.value if isinstance(self.kind, MsgKind) else self.kind
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "payload", dict(self.payload))
        if kind not in PROTOCOL_KINDS:
            raise ProtocolError(f"unknown message kind {kind!r}")
        p = self.payload
        if kind == MsgKind.ENERGY_REQUEST:
            if not p.get("energy_wh", 0) > 0:
                raise ProtocolError("energy_request needs energy_wh > 0")
        elif kind == MsgKind.ENERGY_REPLY:
            if p.get("reply") not in ("oui", "non"):
                raise ProtocolError("energy_reply must be 'oui' or 'non'")
        elif kind == MsgKind.CONTROL_RESCHEDULE:
            try:
                self.order()
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"bad reschedule payload: {exc}") from None
        elif kind == MsgKind.CONSUMPTION_REPORT:
            if "cumulative_wh" not in p:
                raise ProtocolError("consumption_report needs cumulative_wh")

    def order(self) -> RescheduleOrder:
        p = self.payload
        return RescheduleOrder(p["time_resch_s"], p["taux_energy_pct"], p.get("source", self.sender))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "from": self.sender, "to": self.recipient,
                "sent_at_s": self.sent_at_s, "payload": dict(self.payload)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentMessage":
        try:
            return cls(d["kind"], d["from"], d["to"], d["sent_at_s"], d.get("payload", {}))
        except KeyError as exc:
            raise ProtocolError(f"message missing field {exc}") from None


def energy_request(sender: str, to: str, t: float, energy_wh: float) -> AgentMessage:
    return AgentMessage(MsgKind.ENERGY_REQUEST, sender, to, t, {"energy_wh": energy_wh})


def energy_reply(sender: str, to: str, t: float, accepted: bool) -> AgentMessage:
    return AgentMessage(MsgKind.ENERGY_REPLY, sender, to, t, {"reply": "oui" if accepted else "non"})


def no_perturbation(sender: str, to: str, t: float) -> AgentMessage:
    return AgentMessage(MsgKind.CONTROL_NO_PERTURBATION, sender, to, t)


def reschedule_message(sender: str, to: str, t: float, order: RescheduleOrder) -> AgentMessage:
    return AgentMessage(MsgKind.CONTROL_RESCHEDULE, sender, to, t, {
        "time_resch_s": order.time_resch_s,
        "taux_energy_pct": order.taux_energy_pct,
        "source": order.source or sender,
    })


def consumption_report(sender: str, to: str, t: float, cumulative_wh: float, planned_wh: float) -> AgentMessage:
    return AgentMessage(MsgKind.CONSUMPTION_REPORT, sender, to, t,
                        {"cumulative_wh": cumulative_wh, "planned_wh": planned_wh})


@dataclass(frozen=True)
class ProtocolFault:
    agent: str
    note: str


Action = Union[AgentMessage, ProtocolFault]


# -- AOU ------------------------------------------------------------------------

class Phase(str, Enum):
    PREDICTIVE = "predictive"
    AWAITING_REPLY = "awaiting_reply"
    ONLINE = "online"
    DONE = "done"


@dataclass(frozen=True)
class NegotiationRow:
    agent: str
    gamma: float
    makespan_s: int
    energy_wh: float
    reply: str = ""


@dataclass(frozen=True)
class ReactiveRow:
    agent: str
    source: str
    taux: float
    time_resch_s: float
    old_mk: int
    old_e: float
    new_mk: int
    new_e: float
    penalty: bool
    budget_wh: float
    technique: str


Solver = Callable[[Instance, float, PsoParams], tuple]


def _default_solver(instance: Instance, gamma: float, params: PsoParams) -> tuple:
    res = pso_run(instance, gamma, params)
    return res.schedule, res.fitness


def round_seed(base_seed: int, round_index: int) -> int:
    """PSO seed for one negotiation round; identical in every runtime mode."""
    return int(np.random.SeedSequence([base_seed, round_index]).generate_state(1)[0])


@dataclass(frozen=True)
class AouState:
    name: str
    instance: Instance
    provider: str
    gamma: float = 1.0
    alpha: float = 0.1
    phase: Phase = Phase.PREDICTIVE
    current: Optional[Schedule] = None
    predictive: Optional[Schedule] = None
    p3_s: float = 8.0
    pso_params: PsoParams = field(default_factory=PsoParams)
    seed: int = 0
    history: tuple[NegotiationRow, ...] = ()
    failed: bool = False
    applied: frozenset[tuple[str, float]] = frozenset()
    active_taux: tuple[tuple[str, float], ...] = ()
    reactive: tuple[ReactiveRow, ...] = ()
    notes: tuple[str, ...] = ()
    ace: Optional[str] = None
    budget_baseline: str = "total"

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.phase == Phase.ONLINE and self.current is None:
            raise ValueError("an online AOU needs a current schedule")

    @property
    def pso_runs(self) -> int:
        return len(self.history)


def _run_round(state: AouState, now_s: float, solver: Solver) -> tuple[AouState, list[Action]]:
    params = replace(state.pso_params, seed=round_seed(state.seed, len(state.history)))
    schedule, _ = solver(state.instance, state.gamma, params)
    row = NegotiationRow(state.name, state.gamma, schedule.makespan_s, schedule.total_energy_wh)
    state = replace(state, phase=Phase.AWAITING_REPLY, current=schedule,
                    history=state.history + (row,))
    return state, [energy_request(state.name, state.provider, now_s, schedule.total_energy_wh)]


def aou_predictive_step(
    state: AouState,
    event: Union[str, AgentMessage],
    now_s: float = 0.0,
    solver: Optional[Solver] = None,
) -> tuple[AouState, list[Action]]:
    """Offline negotiation.  ``event`` is ``"start"`` or an energy_reply."""
    solver = solver or _default_solver
    if event == "start":
        if state.phase != Phase.PREDICTIVE:
            return state, [ProtocolFault(state.name, f"start received in phase {state.phase.value}")]
        return _run_round(state, now_s, solver)

    if not isinstance(event, AgentMessage) or event.kind != MsgKind.ENERGY_REPLY:
        return state, [ProtocolFault(state.name, f"unexpected predictive event {event!r}")]
    if state.phase != Phase.AWAITING_REPLY:
        return state, [ProtocolFault(state.name, f"reply received in phase {state.phase.value}")]

    reply = event.payload["reply"]
    history = state.history[:-1] + (replace(state.history[-1], reply=reply),)
    state = replace(state, history=history)
    if reply == "oui":
        return replace(state, phase=Phase.ONLINE, predictive=state.current), []
    if state.gamma - state.alpha < -1e-9:
        return replace(state, phase=Phase.DONE, failed=True, current=None,
                       notes=state.notes + ("negotiation exhausted gamma",)), []
    gamma = max(0.0, round(state.gamma - state.alpha, 10))
    return _run_round(replace(state, gamma=gamma, phase=Phase.PREDICTIVE), now_s, solver)


def completed_energy_wh(schedule: Schedule, instance: Instance, t: float) -> float:
    return sum(instance.op(*p.key).energy_dwh(p.speed) for p in schedule.placements if p.end_s <= t) / 10


def aou_online_step(
    state: AouState, event: AgentMessage, now_s: float = 0.0
) -> tuple[AouState, list[Action]]:
    """React to one control message from an AOE."""
    if state.phase != Phase.ONLINE:
        return replace(state, notes=state.notes + (f"t={now_s}: control ignored in phase {state.phase.value}",)), []
    active = dict(state.active_taux)
    if event.kind == MsgKind.CONTROL_NO_PERTURBATION:
        if event.sender in active:
            del active[event.sender]
            state = replace(state, active_taux=tuple(sorted(active.items())))
        return state, []
    if event.kind != MsgKind.CONTROL_RESCHEDULE:
        return state, [ProtocolFault(state.name, f"unexpected control message {event.kind}")]

    order = event.order()
    ident = (order.source, order.time_resch_s)
    if ident in state.applied:
        return state, []
    if active.get(order.source) == order.taux_energy_pct:
        # unchanged reduction level from the same source: already honoured
        return replace(state, applied=state.applied | {ident}), []
    current = state.current
    assert current is not None
    t = max(order.time_resch_s, now_s)
    if t >= current.makespan_s:
        note = f"t={now_s}: order from {order.source} at {order.time_resch_s} is past completion"
        return replace(state, applied=state.applied | {ident}, notes=state.notes + (note,)), []

    effective = RescheduleOrder(t, order.taux_energy_pct, order.source)
    result = reschedule(current, effective, state.instance, baseline=state.budget_baseline)
    new = result.schedule
    row = ReactiveRow(
        state.name, order.source, order.taux_energy_pct, t,
        current.makespan_s, current.total_energy_wh, new.makespan_s, new.total_energy_wh,
        result.penalty, result.energy_budget_wh, result.technique_used.value,
    )
    if result.penalty:
        log.info("%s: reschedule for %s missed its budget (%.1f > %.1f Wh)", state.name,
                 order.source, new.total_energy_wh, result.energy_budget_wh)
    active[order.source] = order.taux_energy_pct
    state = replace(state, current=new, reactive=state.reactive + (row,),
                    applied=state.applied | {ident}, active_taux=tuple(sorted(active.items())))
    actions: list[Action] = []
    if state.ace:
        actions.append(consumption_report(state.name, state.ace, now_s,
                                          completed_energy_wh(new, state.instance, now_s),
                                          new.total_energy_wh))
    return state, actions


# -- AOE ------------------------------------------------------------------------

EnergySource = Union[WindSourceConfig, PvSource]


@dataclass(frozen=True)
class AoeState:
    name: str
    source: EnergySource
    capacity_wh: float
    filter: FilterState
    committed_wh: float = 0.0
    p1_s: float = 3.0
    trace: tuple[SensorSample, ...] = ()
    subscribers: tuple[str, ...] = ()
    last_alarm: Optional[EnergyAlarm] = None
    perturbations: tuple[Perturbation, ...] = ()

    def __post_init__(self) -> None:
        if self.committed_wh > self.capacity_wh + 1e-9:
            raise ValueError("committed energy exceeds capacity")
        if not self.p1_s < self.filter.p2_initial_s:
            raise ValueError("p2 must be longer than the acquisition period p1")
        if isinstance(self.source, WindSourceConfig) and not self.trace:
            raise ValueError("a wind source needs a sensor trace")

    @property
    def p2_s(self) -> float:
        return self.filter.p2_s


def aoe_validate_request(state: AoeState, request: AgentMessage) -> tuple[AoeState, AgentMessage]:
    e = float(request.payload["energy_wh"])
    ok = e > 0 and state.committed_wh + e <= state.capacity_wh + 1e-9
    if ok:
        state = replace(state, committed_wh=round(state.committed_wh + e, 6))
    return state, energy_reply(state.name, request.sender, request.sent_at_s, ok)


@dataclass(frozen=True)
class Tick:
    timer: str  # "p1" | "p2" | "p3"
    sample: Optional[SensorSample] = None


def aoe_online_step(state: AoeState, event: Tick, now_s: float) -> tuple[AoeState, list[Action]]:
    if event.timer == "p1":
        if isinstance(state.source, PvSource):
            return replace(state, last_alarm=pv_source_poll(state.source)), []
        sample = event.sample or sample_at(state.trace, now_s)
        try:
            alarm = detect(sample, state.source)
        except DensityError as exc:
            return state, [ProtocolFault(state.name, f"t={now_s}: {exc}")]
        return replace(state, last_alarm=alarm), []

    if event.timer == "p2":
        alarm = state.last_alarm or EnergyAlarm(False, 1.0, 0.0)
        window = state.filter.p2_s
        filt, action = filter_alarm(state.filter, alarm, now_s, source=state.name)
        state = replace(state, filter=filt)
        if isinstance(action, NoPerturbation):
            return state, [no_perturbation(state.name, s, now_s) for s in state.subscribers]
        pert = Perturbation(state.name, now_s, window)
        state = replace(state, perturbations=state.perturbations + (pert,))
        return state, [reschedule_message(state.name, s, now_s, action) for s in state.subscribers]

    return state, [ProtocolFault(state.name, f"unknown timer {event.timer!r}")]


# -- ACE ------------------------------------------------------------------------

class LedgerError(ValueError):
    pass


@dataclass(frozen=True)
class AceState:
    ledger: Mapping[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)


def ace_record(state: AceState, report: tuple[str, float, float]) -> AceState:
    factory, t, cumulative = report
    rows = state.ledger.get(factory, ())
    if rows and (t < rows[-1][0] or cumulative < rows[-1][1]):
        raise LedgerError(
            f"{factory}: report ({t}, {cumulative}) goes backwards from {rows[-1]}"
        )
    ledger = dict(state.ledger)
    ledger[factory] = rows + ((t, cumulative),)
    return AceState(ledger)


# -- runtime adapters -------------------------------------------------------------

@dataclass
class StepResult:
    messages: list[AgentMessage] = field(default_factory=list)
    timers: list[tuple[str, float]] = field(default_factory=list)
    faults: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"messages": [m.to_dict() for m in self.messages],
                "timers": [list(t) for t in self.timers], "faults": list(self.faults)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StepResult":
        return cls([AgentMessage.from_dict(m) for m in d.get("messages", [])],
                   [(k, due) for k, due in d.get("timers", [])], list(d.get("faults", [])))


def _split(actions: Sequence[Action]) -> StepResult:
    out = StepResult()
    for a in actions:
        if isinstance(a, AgentMessage):
            out.messages.append(a)
        else:
            out.faults.append(f"{a.agent}: {a.note}")
    return out


def _row_dict(row: Any) -> dict:
    return dict(row.__dict__)


class AouAgent:
    role = "aou"

    def __init__(self, state: AouState, solver: Optional[Solver] = None):
        self.state = state
        self.name = state.name
        self.solver = solver
        self.inbox: list[AgentMessage] = []

    def initial_timers(self) -> list[tuple[str, float]]:
        return [("start", 0.0), ("p3", self.state.p3_s)]

    def handle(self, event: Union[str, AgentMessage], now_s: float) -> StepResult:
        if event == "start" or (isinstance(event, AgentMessage) and event.kind == MsgKind.ENERGY_REPLY):
            self.state, actions = aou_predictive_step(self.state, event, now_s, self.solver)
            return _split(actions)
        if isinstance(event, AgentMessage):
            if event.kind in (MsgKind.CONTROL_RESCHEDULE, MsgKind.CONTROL_NO_PERTURBATION):
                self.inbox.append(event)
                return StepResult()
            return StepResult(faults=[f"{self.name}: unexpected message {event.kind}"])
        if event == "p3":
            res = StepResult(timers=[("p3", now_s + self.state.p3_s)])
            if self.state.phase != Phase.ONLINE:
                if self.state.phase == Phase.DONE:
                    self.inbox.clear()
                return res
            pending, self.inbox = self.inbox, []
            for msg in pending:
                self.state, actions = aou_online_step(self.state, msg, now_s)
                step = _split(actions)
                res.messages += step.messages
                res.faults += step.faults
            st = self.state
            if st.ace and st.current is not None:
                res.messages.append(consumption_report(
                    st.name, st.ace, now_s, completed_energy_wh(st.current, st.instance, now_s),
                    st.current.total_energy_wh))
            return res
        return StepResult(faults=[f"{self.name}: unknown event {event!r}"])

    def report(self) -> dict:
        st = self.state
        return {
            "role": self.role,
            "phase": st.phase.value,
            "failed": st.failed,
            "negotiation": [_row_dict(r) for r in st.history],
            "reactive": [_row_dict(r) for r in st.reactive],
            "predictive": st.predictive.to_dict() if st.predictive else None,
            "final": st.current.to_dict() if st.current else None,
            "notes": list(st.notes),
        }


class AoeAgent:
    role = "aoe"

    def __init__(self, state: AoeState):
        self.state = state
        self.name = state.name
        self.orders: list[dict] = []

    def initial_timers(self) -> list[tuple[str, float]]:
        return [("p1", self.state.p1_s), ("p2", self.state.p2_s)]

    def handle(self, event: Union[str, AgentMessage], now_s: float) -> StepResult:
        if isinstance(event, AgentMessage):
            if event.kind != MsgKind.ENERGY_REQUEST:
                return StepResult(faults=[f"{self.name}: unexpected message {event.kind}"])
            self.state, reply = aoe_validate_request(self.state, event)
            return StepResult(messages=[replace(reply, sent_at_s=now_s)])
        if event in ("p1", "p2"):
            self.state, actions = aoe_online_step(self.state, Tick(event), now_s)
            res = _split(actions)
            period = self.state.p1_s if event == "p1" else self.state.p2_s
            res.timers.append((event, now_s + period))
            for m in res.messages:
                if m.kind == MsgKind.CONTROL_RESCHEDULE:
                    self.orders.append({"t_s": now_s, "to": m.recipient, **m.payload})
            return res
        return StepResult(faults=[f"{self.name}: unknown event {event!r}"])

    def report(self) -> dict:
        st = self.state
        return {
            "role": self.role,
            "committed_wh": st.committed_wh,
            "capacity_wh": st.capacity_wh,
            "orders": self.orders,
            "perturbations": [
                {"resource": p.resource, "occurrence_s": p.occurrence_s, "duration_s": p.duration_s,
                 "kind": p.kind.value, "resource_class": p.resource_class.value}
                for p in st.perturbations
            ],
        }


class AceAgent:
    role = "ace"

    def __init__(self, name: str = "ace"):
        self.name = name
        self.state = AceState()
        self.rejected: list[str] = []

    def initial_timers(self) -> list[tuple[str, float]]:
        return []

    def handle(self, event: Union[str, AgentMessage], now_s: float) -> StepResult:
        if not isinstance(event, AgentMessage) or event.kind != MsgKind.CONSUMPTION_REPORT:
            return StepResult(faults=[f"{self.name}: unexpected event {event!r}"])
        try:
            self.state = ace_record(self.state, (event.sender, now_s, event.payload["cumulative_wh"]))
        except LedgerError as exc:
            self.rejected.append(str(exc))
            return StepResult(faults=[f"{self.name}: {exc}"])
        return StepResult()

    def report(self) -> dict:
        return {
            "role": self.role,
            "ledger": {k: [list(r) for r in v] for k, v in sorted(self.state.ledger.items())},
            "rejected": list(self.rejected),
        }
