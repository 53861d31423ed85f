"""Wire format shared by the broker, eyes and orchestrator.

Every connection exchanges length-prefixed frames:

    u32 length | u32 magic | u16 version | u16 type |
    u16 topic length | topic bytes | u32 payload length | payload bytes

all little-endian. Topics are dot-separated ASCII segments; subscription
patterns may end with a single ``*`` segment that matches exactly one
segment.
"""

from __future__ import annotations

import asyncio
import json
import re
import struct
from dataclasses import dataclass

from ..geometry import Intrinsics

MAGIC = 0x50414356  # "VCAP" when written little-endian
VERSION = 1

TYPE_SUBSCRIBE = 1
TYPE_PUBLISH = 2
TYPE_DELIVER = 3

MAX_FRAME_BYTES = 64 * 1024 * 1024
MAX_EYE_ID_BYTES = 32

_HEAD = struct.Struct("<IHH")
_TOPIC_LEN = struct.Struct("<H")
_PAYLOAD_LEN = struct.Struct("<I")

_SEGMENT = re.compile(r"^[A-Za-z0-9_-]+$")


class WireError(ValueError):
    """Malformed frame, topic or message payload."""


def validate_topic(topic: str, pattern: bool = False) -> str:
    segments = topic.split(".")
    if not segments or any(not s for s in segments):
        raise WireError(f"empty segment in topic {topic!r}")
    for i, seg in enumerate(segments):
        if pattern and seg == "*":
            if i != len(segments) - 1:
                raise WireError("wildcard only allowed as the final segment")
            continue
        if not _SEGMENT.match(seg):
            raise WireError(f"bad topic segment {seg!r}")
    return topic


def topic_matches(pattern: str, topic: str) -> bool:
    """Wildcard-aware match; '*' stands for exactly one trailing segment."""
    p = pattern.split(".")
    t = topic.split(".")
    if len(p) != len(t):
        return False
    for ps, ts in zip(p, t):
        if ps == "*":
            continue
        if ps != ts:
            return False
    return True


def pack_frame(msg_type: int, topic: str, payload: bytes) -> bytes:
    tb = topic.encode("ascii")
    if len(tb) > 65535:
        raise WireError("topic too long")
    body = (
        _HEAD.pack(MAGIC, VERSION, msg_type)
        + _TOPIC_LEN.pack(len(tb))
        + tb
        + _PAYLOAD_LEN.pack(len(payload))
        + payload
    )
    return _PAYLOAD_LEN.pack(len(body)) + body


def unpack_frame(body: bytes) -> tuple[int, str, bytes]:
    if len(body) < _HEAD.size + _TOPIC_LEN.size + _PAYLOAD_LEN.size:
        raise WireError("frame too short")
    magic, version, msg_type = _HEAD.unpack_from(body, 0)
    if magic != MAGIC:
        raise WireError("bad frame magic")
    if version != VERSION:
        raise WireError(f"unsupported wire version {version}")
    off = _HEAD.size
    (tlen,) = _TOPIC_LEN.unpack_from(body, off)
    off += _TOPIC_LEN.size
    if off + tlen + _PAYLOAD_LEN.size > len(body):
        raise WireError("topic overruns frame")
    try:
        topic = body[off : off + tlen].decode("ascii")
    except UnicodeDecodeError as exc:
        raise WireError("topic is not ascii") from exc
    off += tlen
    (plen,) = _PAYLOAD_LEN.unpack_from(body, off)
    off += _PAYLOAD_LEN.size
    if off + plen != len(body):
        raise WireError("payload length does not match frame")
    return msg_type, topic, body[off : off + plen]


async def read_frame(reader: asyncio.StreamReader) -> tuple[int, str, bytes]:
    """Read one frame; raises IncompleteReadError at clean EOF."""
    head = await reader.readexactly(4)
    (length,) = _PAYLOAD_LEN.unpack(head)
    if length == 0 or length > MAX_FRAME_BYTES:
        raise WireError(f"implausible frame length {length}")
    body = await reader.readexactly(length)
    return unpack_frame(body)


async def write_frame(
    writer: asyncio.StreamWriter, msg_type: int, topic: str, payload: bytes
) -> None:
    writer.write(pack_frame(msg_type, topic, payload))
    await writer.drain()


# -- application messages --------------------------------------------------

_FRAME_FIXED = struct.Struct("<BQQddddII")  # id len, index, ts, fx, fy, cx, cy, w, h


@dataclass(frozen=True, eq=False)
class FrameMessage:
    """One captured frame from one eye."""

    eye_id: str
    frame_index: int
    timestamp_us: int
    intrinsics: Intrinsics
    color_payload: bytes
    depth_payload: bytes

    def encode(self) -> bytes:
        eid = self.eye_id.encode("utf-8")
        if not eid or len(eid) > MAX_EYE_ID_BYTES:
            raise WireError(f"eye id must be 1..{MAX_EYE_ID_BYTES} bytes")
        k = self.intrinsics
        fixed = _FRAME_FIXED.pack(
            len(eid),
            self.frame_index,
            self.timestamp_us,
            k.fx,
            k.fy,
            k.cx,
            k.cy,
            k.width,
            k.height,
        )
        return (
            fixed
            + eid
            + _PAYLOAD_LEN.pack(len(self.color_payload))
            + self.color_payload
            + _PAYLOAD_LEN.pack(len(self.depth_payload))
            + self.depth_payload
        )


def decode_frame_message(data: bytes) -> FrameMessage:
    if len(data) < _FRAME_FIXED.size:
        raise WireError("frame message too short")
    id_len, index, ts, fx, fy, cx, cy, w, h = _FRAME_FIXED.unpack_from(data)
    off = _FRAME_FIXED.size
    if id_len == 0 or id_len > MAX_EYE_ID_BYTES:
        raise WireError("bad eye id length")
    if off + id_len > len(data):
        raise WireError("eye id overruns message")
    try:
        eye_id = data[off : off + id_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError("eye id is not utf-8") from exc
    off += id_len
    parts = []
    for _ in range(2):
        if off + 4 > len(data):
            raise WireError("truncated payload length")
        (plen,) = _PAYLOAD_LEN.unpack_from(data, off)
        off += 4
        if off + plen > len(data):
            raise WireError("payload overruns message")
        parts.append(data[off : off + plen])
        off += plen
    if off != len(data):
        raise WireError("trailing bytes after frame message")
    try:
        intr = Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=int(w), height=int(h))
    except Exception as exc:
        raise WireError(f"invalid intrinsics in frame: {exc}") from exc
    return FrameMessage(eye_id, index, ts, intr, parts[0], parts[1])


def peek_frame_index(data: bytes) -> int:
    """Frame index without a full decode (recording index fast path)."""
    if len(data) < _FRAME_FIXED.size:
        raise WireError("frame message too short")
    return _FRAME_FIXED.unpack_from(data)[1]


CONTROL_VERBS = ("start", "stop", "set-params", "snapshot", "calibrate")


@dataclass(frozen=True)
class ControlMessage:
    """Orchestrator-to-eye command. Target 'all' fans out to every eye."""

    verb: str
    target: str = "all"
    params: dict | None = None

    def __post_init__(self):
        if self.verb not in CONTROL_VERBS:
            raise WireError(f"unknown control verb {self.verb!r}")

    def encode(self) -> bytes:
        return json.dumps(
            {"verb": self.verb, "target": self.target, "params": self.params or {}},
            sort_keys=True,
        ).encode("utf-8")

    @property
    def topic(self) -> str:
        return f"control.{self.target}"


def decode_control_message(data: bytes) -> ControlMessage:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"malformed control message: {exc}") from exc
    if not isinstance(obj, dict) or "verb" not in obj:
        raise WireError("control message missing verb")
    params = obj.get("params")
    if params is not None and not isinstance(params, dict):
        raise WireError("control params must be an object")
    return ControlMessage(str(obj["verb"]), str(obj.get("target", "all")), params)
