"""Simulated eye: renders (or replays) RGB-D frames, corrupts and
compresses them, and publishes them to the broker.

Each eye owns a fixed pose and intrinsics, listens on its control topics,
and stamps frames with a virtual clock derived from the frame rate so a
seeded run is reproducible regardless of wall time.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import DEFAULT_INTRINSICS, GeometryError, Intrinsics, Pose
from ..noise import NoiseParams, corrupt
from ..rasters import label_color_image
from ..render import render
from ..structure import StructureModel, default_structure
from .broker import BrokerClient
from .codec import encode_color, encode_depth
from .recording import iter_recording
from .wire import ControlMessage, FrameMessage, WireError, decode_control_message

log = logging.getLogger(__name__)


class EyeError(RuntimeError):
    pass


@dataclass
class EyeConfig:
    eye_id: str
    pose: Pose
    broker_host: str = "127.0.0.1"
    broker_port: int = 0
    intrinsics: Intrinsics = DEFAULT_INTRINSICS
    noise: NoiseParams = field(default_factory=NoiseParams)
    structure: StructureModel | None = None
    fps: float = 15.0
    jpeg_quality: int = 90
    max_frames: int | None = None  # stop after this many published frames
    replay_path: Path | None = None  # re-publish a recording instead of rendering
    autostart: bool = True
    realtime: bool = False  # pace with wall-clock sleeps; off = run flat out
    connect_attempts: int = 5


class EyeService:
    def __init__(self, config: EyeConfig):
        if not config.eye_id:
            raise EyeError("eye needs an id")
        self.config = config
        self.frame_index = 0
        self.frames_published = 0
        self._running = config.autostart
        self._stopping = False
        self._snapshot_requested = False
        self._clock_us = 0
        self._rng = np.random.default_rng(config.noise.seed)
        self._client: BrokerClient | None = None
        self._scene = None
        self._color_jpeg: bytes | None = None
        if config.replay_path is None:
            self._prepare_scene()

    # -- scene ---------------------------------------------------------------

    def _prepare_scene(self) -> None:
        model = self.config.structure or default_structure()
        self._scene = render(model, self.config.pose.inverse(), self.config.intrinsics)
        self._color_jpeg = None

    def _color_payload(self) -> bytes:
        if self._color_jpeg is None:
            img = label_color_image(self._scene.label)
            self._color_jpeg = encode_color(img, self.config.jpeg_quality)
        return self._color_jpeg

    # -- control -------------------------------------------------------------

    def apply_params(self, params: dict) -> None:
        cfg = self.config
        if "fps" in params:
            fps = float(params["fps"])
            if fps <= 0:
                raise EyeError("fps must be positive")
            cfg.fps = fps
        if "jpeg_quality" in params:
            q = int(params["jpeg_quality"])
            if not 1 <= q <= 100:
                raise EyeError("jpeg quality must be 1..100")
            cfg.jpeg_quality = q
            self._color_jpeg = None
        if "noise" in params:
            cfg.noise = NoiseParams.from_dict({**cfg.noise.to_dict(), **params["noise"]})
            self._rng = np.random.default_rng(cfg.noise.seed)
        if "resolution" in params:
            w, h = (int(v) for v in params["resolution"])
            k = cfg.intrinsics
            scale = w / k.width
            try:
                cfg.intrinsics = Intrinsics(
                    fx=k.fx * scale, fy=k.fy * scale,
                    cx=k.cx * scale, cy=k.cy * scale, width=w, height=h,
                )
            except GeometryError as exc:
                raise EyeError(f"bad resolution: {exc}") from exc
            if cfg.replay_path is None:
                self._prepare_scene()
        if "pose" in params:
            p = params["pose"]
            try:
                cfg.pose = Pose(np.array(p["rotation"]), np.array(p["translation"]))
            except (KeyError, GeometryError) as exc:
                raise EyeError(f"bad pose override: {exc}") from exc
            if cfg.replay_path is None:
                self._prepare_scene()

    def _handle_control(self, msg: ControlMessage) -> None:
        if msg.target not in ("all", self.config.eye_id):
            return
        if msg.verb == "start":
            self._running = True  # idempotent; indices keep counting up
        elif msg.verb == "stop":
            self._running = False
        elif msg.verb == "snapshot":
            self._snapshot_requested = True
        elif msg.verb == "set-params":
            try:
                self.apply_params(msg.params or {})
            except (EyeError, WireError, ValueError) as exc:
                log.warning("%s: rejected params: %s", self.config.eye_id, exc)
        # "calibrate" is orchestrator business; eyes ignore it

    # -- frame production ------------------------------------------------------

    def build_frame(self) -> FrameMessage:
        cfg = self.config
        depth = corrupt(self._scene.depth, self._scene.label, cfg.noise, self._rng)
        msg = FrameMessage(
            eye_id=cfg.eye_id,
            frame_index=self.frame_index,
            timestamp_us=self._clock_us,
            intrinsics=cfg.intrinsics,
            color_payload=self._color_payload(),
            depth_payload=encode_depth(depth),
        )
        return msg

    def _tick_clock(self) -> None:
        self.frame_index += 1
        self._clock_us += int(round(1_000_000 / self.config.fps))

    # -- main loop ---------------------------------------------------------------

    async def _connect(self) -> BrokerClient:
        delay = 0.1
        last: Exception | None = None
        for _ in range(self.config.connect_attempts):
            try:
                return await BrokerClient.connect(self.config.broker_host, self.config.broker_port)
            except OSError as exc:
                last = exc
                await asyncio.sleep(delay)
                delay *= 2
        raise EyeError(f"cannot reach broker at "
                       f"{self.config.broker_host}:{self.config.broker_port}: {last}")

    async def run(self) -> None:
        cfg = self.config
        publisher = await self._connect()
        control = await self._connect()
        await control.subscribe(f"control.{cfg.eye_id}")
        await control.subscribe("control.all")
        self._client = publisher

        control_task = asyncio.create_task(self._control_loop(control))
        try:
            if cfg.replay_path is not None:
                await self._replay_loop(publisher)
            else:
                await self._render_loop(publisher)
        finally:
            control_task.cancel()
            try:
                await control_task
            except asyncio.CancelledError:
                pass
            await publisher.close()
            await control.close()

    async def _control_loop(self, control: BrokerClient) -> None:
        while True:
            try:
                _, payload = await control.next_message()
            except ConnectionError:
                self._stopping = True
                return
            try:
                self._handle_control(decode_control_message(payload))
            except WireError as exc:
                log.warning("%s: bad control message: %s", self.config.eye_id, exc)

    async def _publish(self, publisher: BrokerClient, msg: FrameMessage) -> None:
        await publisher.publish(f"frames.{self.config.eye_id}", msg.encode())
        self.frames_published += 1

    async def _render_loop(self, publisher: BrokerClient) -> None:
        cfg = self.config
        loop = asyncio.get_running_loop()
        next_deadline = loop.time()
        while not self._stopping:
            if cfg.max_frames is not None and self.frames_published >= cfg.max_frames:
                return
            published = False
            if self._running or self._snapshot_requested:
                self._snapshot_requested = False
                msg = self.build_frame()
                try:
                    await self._publish(publisher, msg)
                except ConnectionError:
                    raise EyeError("broker connection lost")
                self._tick_clock()
                published = True
            if cfg.realtime:
                next_deadline += 1.0 / cfg.fps
                await asyncio.sleep(max(0.0, next_deadline - loop.time()))
            elif published:
                await asyncio.sleep(0)
            else:
                await asyncio.sleep(0.01)  # stopped: wait for control traffic

    async def _replay_loop(self, publisher: BrokerClient) -> None:
        cfg = self.config
        loop = asyncio.get_running_loop()
        next_deadline = loop.time()
        for raw in iter_recording(cfg.replay_path):
            if self._stopping:
                return
            if cfg.max_frames is not None and self.frames_published >= cfg.max_frames:
                return
            while not self._running:
                await asyncio.sleep(0.01)
                if self._stopping:
                    return
            try:
                await self._publish(publisher, _Raw(raw))
            except ConnectionError:
                raise EyeError("broker connection lost")
            if cfg.realtime:
                next_deadline += 1.0 / cfg.fps
                await asyncio.sleep(max(0.0, next_deadline - loop.time()))
            else:
                await asyncio.sleep(0)


class _Raw:
    """Adapter so replay can push stored bytes through _publish."""

    def __init__(self, data: bytes):
        self._data = data

    def encode(self) -> bytes:
        return self._data
