"""TCP-distributed mode.

Every agent runs behind an :class:`AgentServer`.  An orchestrator connects to
all of them, owns the timer queue, forwards protocol messages and collects
report fragments.  Agent logic is the same object the simulator drives; only
the transport differs.  With ``clock="wall"`` timers are released at their
wall-clock due time (scaled by ``time_scale``), otherwise as fast as the
peers answer.
"""

from __future__ import annotations

import asyncio
import logging
import time
from typing import Optional

from ..agents import AgentMessage, StepResult
from ..scenario import Scenario
from .sim import Agent, Dispatch, assemble_report, build_agent
from .wire import HEADER, Envelope, Frame, decode_frame, encode_frame

log = logging.getLogger(__name__)

ORCHESTRATOR = "orchestrator"


class PeerUnreachable(ConnectionError):
    def __init__(self, name: str, address: str, cause: Optional[BaseException] = None):
        self.name = name
        self.address = address
        super().__init__(f"peer {name!r} unreachable at {address}" + (f": {cause}" if cause else ""))


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {address!r}")
    return host, int(port)


async def read_frame(reader: asyncio.StreamReader) -> Frame:
    header = await reader.readexactly(HEADER.size)
    (length,) = HEADER.unpack(header)
    body = await reader.readexactly(length)
    msg, _ = decode_frame(header + body)
    return msg


async def write_frame(writer: asyncio.StreamWriter, msg: Frame) -> None:
    writer.write(encode_frame(msg))
    await writer.drain()


class AgentServer:
    """Hosts one agent; answers orchestrator frames one at a time."""

    def __init__(self, scenario: Scenario, name: str, host: str = "127.0.0.1", port: int = 0):
        self.scenario = scenario
        self.name = name
        self.host = host
        self.port = port
        self.agent: Optional[Agent] = None
        self._server: Optional[asyncio.base_events.Server] = None
        self._done = asyncio.Event()

    async def start(self) -> str:
        self._server = await asyncio.start_server(self._serve, self.host, self.port)
        sock = self._server.sockets[0]
        self.host, self.port = sock.getsockname()[:2]
        log.info("%s listening on %s:%s", self.name, self.host, self.port)
        return f"{self.host}:{self.port}"

    async def serve_forever(self) -> None:
        await self._done.wait()
        await self.close()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                frame = await read_frame(reader)
                reply = await self._answer(frame)
                if reply is not None:
                    await write_frame(writer, reply)
                if isinstance(frame, Envelope) and frame.kind == "shutdown":
                    self._done.set()
                    break
        except (asyncio.IncompleteReadError, ConnectionError) as exc:
            # keep state; the orchestrator may reconnect
            log.warning("%s: orchestrator connection lost (%s); degraded until reconnect", self.name, exc)
        finally:
            writer.close()

    async def _answer(self, frame: Frame) -> Optional[Envelope]:
        if not isinstance(frame, Envelope):
            log.warning("%s: ignoring bare protocol frame %s", self.name, frame.kind)
            return None
        now = frame.sent_at_s
        if frame.kind == "hello":
            self.agent = build_agent(self.scenario, self.name, int(frame.payload["seed"]))
            return Envelope("ready", self.name, frame.sender, now,
                            {"timers": [list(t) for t in self.agent.initial_timers()]})
        if self.agent is None:
            return Envelope("step_done", self.name, frame.sender, now,
                            StepResult(faults=[f"{self.name}: event before hello"]).to_dict())
        if frame.kind == "event":
            p = frame.payload
            event = AgentMessage.from_dict(p["message"]) if p.get("message") else p["timer"]
            result = await asyncio.to_thread(self.agent.handle, event, p["now_s"])
            return Envelope("step_done", self.name, frame.sender, now, result.to_dict())
        if frame.kind == "report_request":
            return Envelope("report", self.name, frame.sender, now, {"report": self.agent.report()})
        if frame.kind == "shutdown":
            return None
        return Envelope("step_done", self.name, frame.sender, now,
                        StepResult(faults=[f"{self.name}: unexpected {frame.kind}"]).to_dict())


class RemoteAgent:
    """Orchestrator-side proxy for an agent behind an :class:`AgentServer`."""

    def __init__(self, name: str, address: str, retries: int = 5, backoff_s: float = 0.05):
        self.name = name
        self.address = address
        self.retries = retries
        self.backoff_s = backoff_s
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self.degraded = False

    async def connect(self) -> None:
        host, port = parse_address(self.address)
        delay = self.backoff_s
        last: Optional[BaseException] = None
        for _ in range(self.retries):
            try:
                self._reader, self._writer = await asyncio.open_connection(host, port)
                self.degraded = False
                return
            except OSError as exc:
                last = exc
                await asyncio.sleep(delay)
                delay *= 2
        self.degraded = True
        raise PeerUnreachable(self.name, self.address, last)

    async def call(self, envelope: Envelope) -> Frame:
        for attempt in (0, 1):
            try:
                if self._writer is None:
                    await self.connect()
                assert self._reader is not None and self._writer is not None
                await write_frame(self._writer, envelope)
                return await read_frame(self._reader)
            except (asyncio.IncompleteReadError, ConnectionError, OSError) as exc:
                log.warning("%s: call failed (%s), reconnecting", self.name, exc)
                self._writer = None
                if attempt:
                    self.degraded = True
                    raise PeerUnreachable(self.name, self.address, exc) from None
        raise AssertionError("unreachable")

    async def hello(self, seed: int) -> list[tuple[str, float]]:
        reply = await self.call(Envelope("hello", ORCHESTRATOR, self.name, 0.0, {"seed": seed}))
        return [(k, due) for k, due in reply.payload["timers"]]

    async def handle(self, event, now_s: float) -> StepResult:
        payload = {"now_s": now_s}
        if isinstance(event, AgentMessage):
            payload["message"] = event.to_dict()
        else:
            payload["timer"] = event
        reply = await self.call(Envelope("event", ORCHESTRATOR, self.name, now_s, payload))
        return StepResult.from_dict(reply.payload)

    async def report(self) -> dict:
        reply = await self.call(Envelope("report_request", ORCHESTRATOR, self.name, 0.0))
        return reply.payload["report"]

    async def shutdown(self) -> None:
        if self._writer is None:
            return
        try:
            await write_frame(self._writer, Envelope("shutdown", ORCHESTRATOR, self.name, 0.0))
        except (ConnectionError, OSError):
            pass
        self._writer.close()
        self._writer = None


async def run_orchestrator(
    scenario: Scenario,
    peers: dict[str, str],
    seed: Optional[int] = None,
    clock: str = "sim",
    time_scale: float = 1.0,
    shutdown_peers: bool = True,
) -> dict:
    seed = scenario.seed if seed is None else seed
    names = scenario.agent_names()
    missing = [n for n in names if n not in peers]
    if missing:
        raise PeerUnreachable(missing[0], "<no address configured>")
    remotes = {n: RemoteAgent(n, peers[n]) for n in names}
    for r in remotes.values():
        await r.connect()

    d = Dispatch(scenario, names)
    for n, r in remotes.items():
        d.seed_timers(n, await r.hello(seed))

    start = time.monotonic()
    while (timer := d.clock.pop(scenario.horizon_s)) is not None:
        if clock == "wall":
            await asyncio.sleep(max(0.0, start + timer.due_s * time_scale - time.monotonic()))
        event = timer.message if timer.message is not None else timer.kind
        try:
            result = await remotes[timer.owner].handle(event, timer.due_s)
        except PeerUnreachable as exc:
            d.faults.append(f"{timer.owner}: degraded ({exc})")
            continue
        d.absorb(timer, result)
        if clock == "wall":
            d.events[-1].append(round(time.monotonic() - start, 6))

    fragments = {}
    for n, r in remotes.items():
        try:
            fragments[n] = await r.report()
        except PeerUnreachable as exc:
            d.faults.append(f"{n}: no report ({exc})")
            fragments[n] = {"negotiation": [], "reactive": [], "final": None}
    if shutdown_peers:
        for r in remotes.values():
            await r.shutdown()
    report = assemble_report(scenario, seed, fragments, d.events, d.faults)
    report["mode"] = f"distributed/{clock}"
    return report


async def run_loopback_async(scenario: Scenario, seed: Optional[int] = None, clock: str = "sim",
                             time_scale: float = 1.0) -> dict:
    servers = [AgentServer(scenario, n) for n in scenario.agent_names()]
    peers = {s.name: await s.start() for s in servers}
    try:
        return await run_orchestrator(scenario, peers, seed, clock, time_scale)
    finally:
        for s in servers:
            await s.close()


def run_loopback(scenario: Scenario, seed: Optional[int] = None, clock: str = "sim",
                 time_scale: float = 1.0) -> dict:
    """Every agent on its own loopback TCP server, driven by one orchestrator."""
    return asyncio.run(run_loopback_async(scenario, seed, clock, time_scale))


def serve_agent(scenario: Scenario, name: str, listen: str) -> None:
    """Blocking: host one agent until the orchestrator sends shutdown."""
    host, port = parse_address(listen)

    async def main() -> None:
        server = AgentServer(scenario, name, host, port)
        await server.start()
        await server.serve_forever()

    asyncio.run(main())


def run_distributed(
    role: str,
    scenario: Scenario,
    name: Optional[str] = None,
    listen: Optional[str] = None,
    peers: Optional[dict[str, str]] = None,
    seed: Optional[int] = None,
    clock: str = "sim",
    time_scale: float = 1.0,
) -> Optional[dict]:
    """Entry point per process role: aou / aoe / ace serve, orchestrator drives."""
    if role in ("aou", "aoe", "ace"):
        if not name or not listen:
            raise ValueError(f"role {role} needs --name and --listen")
        serve_agent(scenario, name, listen)
        return None
    if role == "orchestrator":
        return asyncio.run(run_orchestrator(scenario, peers or scenario.peers, seed, clock, time_scale))
    if role == "loopback":
        return run_loopback(scenario, seed, clock, time_scale)
    raise ValueError(f"unknown role {role!r}")
