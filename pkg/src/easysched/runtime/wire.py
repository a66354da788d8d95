"""Length-prefixed JSON frames.

Each frame is a 4-byte big-endian payload length followed by UTF-8 JSON::

    {"kind": ..., "from": ..., "to": ..., "sent_at_s": ..., "payload": {...}}

Protocol kinds decode to :class:`AgentMessage`; the orchestration kinds used
by the distributed runtime decode to :class:`Envelope`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from ..agents import PROTOCOL_KINDS, AgentMessage, ProtocolError

HEADER = struct.Struct("!I")
MAX_FRAME = 16 * 1024 * 1024

ORCHESTRATION_KINDS = frozenset({"hello", "ready", "event", "step_done", "report_request", "report",
                                 "shutdown"})


class IncompleteFrame(Exception):
    """Not enough bytes buffered for a whole frame; nothing was consumed."""


@dataclass(frozen=True)
class Envelope:
    kind: str
    sender: str
    recipient: str
    sent_at_s: float
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ORCHESTRATION_KINDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")
        object.__setattr__(self, "payload", dict(self.payload))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "from": self.sender, "to": self.recipient,
                "sent_at_s": self.sent_at_s, "payload": dict(self.payload)}


Frame = Union[AgentMessage, Envelope]


def encode_frame(message: Frame) -> bytes:
    body = json.dumps(message.to_dict(), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(body)) + body


def parse_message(data: Mapping[str, Any]) -> Frame:
    if not isinstance(data, Mapping):
        raise ProtocolError("frame body is not a JSON object")
    kind = data.get("kind")
    try:
        if kind in PROTOCOL_KINDS:
            return AgentMessage.from_dict(data)
        if kind in ORCHESTRATION_KINDS:
            return Envelope(kind, data["from"], data["to"], data["sent_at_s"], data.get("payload", {}))
    except KeyError as exc:
        raise ProtocolError(f"message missing field {exc}") from None
    raise ProtocolError(f"unknown message kind {kind!r}")


def decode_frame(buf: Union[bytes, bytearray, memoryview]) -> tuple[Frame, int]:
    """Decode the first frame in ``buf``; returns (message, bytes consumed).

    Raises :class:`IncompleteFrame` when the buffer holds less than one frame.
    """
    if len(buf) < HEADER.size:
        raise IncompleteFrame
    (length,) = HEADER.unpack_from(buf, 0)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds {MAX_FRAME}")
    end = HEADER.size + length
    if len(buf) < end:
        raise IncompleteFrame
    try:
        data = json.loads(bytes(buf[HEADER.size:end]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame body: {exc}") from None
    return parse_message(data), end


class FrameBuffer:
    """Accumulates stream bytes and yields whole frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def __len__(self) -> int:
        return len(self._buf)

    def pop(self) -> Union[Frame, None]:
        try:
            msg, used = decode_frame(self._buf)
        except IncompleteFrame:
            return None
        del self._buf[:used]
        return msg
