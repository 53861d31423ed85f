"""UDP discovery: the orchestrator announces the broker address; listener
hosts reply and spawn a local eye process pointed at that broker.

Announce datagram: b"VCAP" + version byte + "host:port" (utf-8).
Reply datagram:    b"VEYE" + version byte + listener id (utf-8).
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

ANNOUNCE_MAGIC = b"VCAP"
REPLY_MAGIC = b"VEYE"
DISCOVERY_VERSION = 1
DEFAULT_DISCOVERY_PORT = 47005


class DiscoveryError(RuntimeError):
    pass


def make_announce(broker_host: str, broker_port: int) -> bytes:
    if not 0 < broker_port < 65536:
        raise DiscoveryError(f"bad broker port {broker_port}")
    return ANNOUNCE_MAGIC + bytes([DISCOVERY_VERSION]) + f"{broker_host}:{broker_port}".encode()


def parse_announce(data: bytes) -> tuple[str, int] | None:
    """Broker address from an announce datagram; None when it is not ours
    (different magic or version; never raises on foreign traffic)."""
    if len(data) < 6 or data[:4] != ANNOUNCE_MAGIC or data[4] != DISCOVERY_VERSION:
        return None
    try:
        host, port = data[5:].decode("utf-8").rsplit(":", 1)
        port_num = int(port)
    except (UnicodeDecodeError, ValueError):
        return None
    if not host or not 0 < port_num < 65536:
        return None
    return host, port_num


def make_reply(listener_id: str) -> bytes:
    return REPLY_MAGIC + bytes([DISCOVERY_VERSION]) + listener_id.encode("utf-8")


def parse_reply(data: bytes) -> str | None:
    if len(data) < 5 or data[:4] != REPLY_MAGIC or data[4] != DISCOVERY_VERSION:
        return None
    try:
        return data[5:].decode("utf-8")
    except UnicodeDecodeError:
        return None


class _ListenerProtocol(asyncio.DatagramProtocol):
    def __init__(self, listener: "AnnounceListener"):
        self.listener = listener
        self.transport = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        self.listener._on_datagram(data, addr, self.transport)


class AnnounceListener:
    """Runs on an eye host. On a valid announce it replies and spawns the
    eye via the provided factory (idempotent: one spawn per broker
    address while the previous one is alive).

    ``spawn`` is a callable (broker_host, broker_port) -> handle, where
    the handle exposes poll() returning None while alive (the subprocess
    API). Tests inject fakes; production passes a Popen factory.
    """

    def __init__(self, listener_id: str, spawn, host: str = "0.0.0.0", port: int = DEFAULT_DISCOVERY_PORT):
        self.listener_id = listener_id
        self.spawn = spawn
        self.host = host
        self.port = port
        self.children: dict[tuple[str, int], object] = {}
        self.announces_seen = 0
        self._transport = None

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self._transport, _ = await loop.create_datagram_endpoint(
            lambda: _ListenerProtocol(self), local_addr=(self.host, self.port)
        )

    @property
    def address(self) -> tuple[str, int]:
        if self._transport is None:
            raise DiscoveryError("listener is not running")
        return self._transport.get_extra_info("sockname")[:2]

    def stop(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def _on_datagram(self, data: bytes, addr, transport) -> None:
        parsed = parse_announce(data)
        if parsed is None:
            return
        self.announces_seen += 1
        broker = parsed
        child = self.children.get(broker)
        if child is None or child.poll() is not None:
            try:
                self.children[broker] = self.spawn(*broker)
                log.info("%s: spawned eye for broker %s:%d", self.listener_id, *broker)
            except Exception as exc:
                log.error("%s: eye spawn failed: %s", self.listener_id, exc)
                return
        transport.sendto(make_reply(self.listener_id), addr)


class _AnnouncerProtocol(asyncio.DatagramProtocol):
    def __init__(self, replies: list):
        self.replies = replies
        self.transport = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        listener_id = parse_reply(data)
        if listener_id is not None:
            self.replies.append((listener_id, addr))


async def announce_broker(
    broker_host: str,
    broker_port: int,
    targets: list[tuple[str, int]],
    timeout: float = 1.0,
) -> list[tuple[str, object]]:
    """Send one announce to each target address and collect replies until
    the timeout. Loopback-friendly: explicit targets, no broadcast needed."""
    loop = asyncio.get_running_loop()
    replies: list[tuple[str, object]] = []
    transport, _ = await loop.create_datagram_endpoint(
        lambda: _AnnouncerProtocol(replies), local_addr=("0.0.0.0", 0)
    )
    try:
        payload = make_announce(broker_host, broker_port)
        for target in targets:
            transport.sendto(payload, target)
        await asyncio.sleep(timeout)
    finally:
        transport.close()
    return replies
