"""Topic pub-sub broker over TCP.

One asyncio server; each connection may subscribe to patterns and publish
to topics. Delivery is fan-out to every matching live subscriber,
at-least-once, FIFO per publisher and topic. A subscriber that stops
draining gets disconnected once its queue fills; the broker never blocks
on a slow consumer.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
from dataclasses import dataclass, field

from .wire import (
    TYPE_DELIVER,
    TYPE_PUBLISH,
    TYPE_SUBSCRIBE,
    WireError,
    pack_frame,
    read_frame,
    topic_matches,
    validate_topic,
)

log = logging.getLogger(__name__)

DEFAULT_QUEUE_FRAMES = 256


@dataclass(eq=False)
class _Connection:
    writer: asyncio.StreamWriter
    patterns: list[str] = field(default_factory=list)
    queue: asyncio.Queue = field(default_factory=lambda: asyncio.Queue(DEFAULT_QUEUE_FRAMES))
    overflowed: bool = False


class Broker:
    def __init__(self, host: str = "127.0.0.1", port: int = 0, queue_frames: int = DEFAULT_QUEUE_FRAMES):
        self._host = host
        self._port = port
        self._queue_frames = queue_frames
        self._server: asyncio.AbstractServer | None = None
        self._connections: set[_Connection] = set()
        self.frames_routed = 0

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("broker is not running")
        sock = self._server.sockets[0]
        host, port = sock.getsockname()[:2]
        return host, port

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._serve, self._host, self._port)

    async def stop(self) -> None:
        if self._server is None:
            return
        self._server.close()
        await self._server.wait_closed()
        for conn in list(self._connections):
            conn.writer.close()
        self._server = None

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = _Connection(writer, queue=asyncio.Queue(self._queue_frames))
        self._connections.add(conn)
        sender = asyncio.create_task(self._send_loop(conn))
        try:
            while True:
                try:
                    msg_type, topic, payload = await read_frame(reader)
                except (asyncio.IncompleteReadError, ConnectionError):
                    break
                except WireError as exc:
                    log.warning("dropping client after bad frame: %s", exc)
                    break
                if msg_type == TYPE_SUBSCRIBE:
                    try:
                        conn.patterns.append(validate_topic(topic, pattern=True))
                    except WireError as exc:
                        log.warning("rejecting subscription %r: %s", topic, exc)
                        break
                elif msg_type == TYPE_PUBLISH:
                    try:
                        validate_topic(topic)
                    except WireError as exc:
                        log.warning("rejecting publish to %r: %s", topic, exc)
                        break
                    self._route(topic, payload)
                else:
                    log.warning("unexpected frame type %d from client", msg_type)
                    break
        finally:
            self._connections.discard(conn)
            sender.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await sender
            writer.close()
            with contextlib.suppress(ConnectionError):
                await writer.wait_closed()

    def _route(self, topic: str, payload: bytes) -> None:
        self.frames_routed += 1
        frame = None
        for conn in list(self._connections):
            if conn.overflowed or not any(
                topic_matches(p, topic) for p in conn.patterns
            ):
                continue
            if frame is None:
                frame = pack_frame(TYPE_DELIVER, topic, payload)
            try:
                conn.queue.put_nowait(frame)
            except asyncio.QueueFull:
                log.warning("subscriber queue overflow; disconnecting")
                conn.overflowed = True
                conn.writer.close()

    async def _send_loop(self, conn: _Connection) -> None:
        while True:
            frame = await conn.queue.get()
            conn.writer.write(frame)
            try:
                await conn.writer.drain()
            except ConnectionError:
                return


class BrokerClient:
    """Client side: publish plus a single merged subscription stream."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    @classmethod
    async def connect(cls, host: str, port: int) -> "BrokerClient":
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer)

    async def subscribe(self, pattern: str) -> None:
        validate_topic(pattern, pattern=True)
        self._writer.write(pack_frame(TYPE_SUBSCRIBE, pattern, b""))
        await self._writer.drain()

    async def publish(self, topic: str, payload: bytes) -> None:
        validate_topic(topic)
        self._writer.write(pack_frame(TYPE_PUBLISH, topic, payload))
        await self._writer.drain()

    async def next_message(self) -> tuple[str, bytes]:
        """Next delivered message; raises ConnectionError when the broker
        goes away (the stream's end-of-life marker)."""
        try:
            msg_type, topic, payload = await read_frame(self._reader)
        except (asyncio.IncompleteReadError, ConnectionError) as exc:
            raise ConnectionError("broker connection lost") from exc
        if msg_type != TYPE_DELIVER:
            raise WireError(f"unexpected frame type {msg_type} from broker")
        return topic, payload

    async def close(self) -> None:
        self._writer.close()
        with contextlib.suppress(ConnectionError):
            await self._writer.wait_closed()
