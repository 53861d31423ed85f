"""Receiving side of the rig: subscribes to every frame topic, decodes
per eye, groups frames of equal index into multi-view sets, records raw
payloads, runs calibration on demand and exposes the control API.

HTTP surface (all JSON unless noted):
  GET  /status                   full orchestrator status
  GET  /eyes                     per-eye status list
  POST /eyes/{id}/params         forward a set-params control message
                                 (``id`` may be "all" for broadcast)
  POST /record/start             body {"directory": str}; starts raw capture
  POST /record/stop              stops and returns the recording path
  POST /calibrate                body {"recording": str} optional; runs the
                                 pipeline on the latest complete set or on a
                                 recording, returns the calibration result
  GET  /calibration              latest job state + result
  GET  /calibration/cloud        decimated registered clouds, frusta and
                                 structure wireframe for the viewer
  GET  /preview/{id}             latest color JPEG + depth colormap, base64
  WS   /events                   1 Hz status pushes with small previews

Static files (the control panel) are mounted at ``/`` when a directory
is supplied, after the API routes so they never shadow them.

No postponed annotations here: create_app builds its endpoints with
locally imported FastAPI types, and those annotations must be real
classes at definition time for the dependency injection to see them.
"""

import asyncio
import base64
import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..calibration import IcpOptions, calibrate
from ..crf import CrfParams
from ..geometry import Intrinsics
from ..labeling import GridSearchConfig, GridSearchLabeler
from ..rasters import depth_color_image
from ..reporting import result_to_dict
from ..sampling import SamplingParams
from ..structure import StructureModel, default_structure
from .broker import BrokerClient
from .codec import DecodeError, decode_color, decode_depth, encode_color
from .recording import RecordingError, RecordingWriter, load_latest_set, recorded_eyes
from .wire import ControlMessage, FrameMessage, WireError, decode_frame_message

log = logging.getLogger(__name__)

DEFAULT_STALE_AFTER_S = 0.5


class OrchestratorError(RuntimeError):
    pass


@dataclass
class AssembledFrame:
    """One decoded frame plus its wall-clock arrival time."""

    message: FrameMessage
    color: np.ndarray
    depth: np.ndarray
    arrived_at: float


@dataclass
class MultiViewSet:
    """Frames of one index across the rig; complete iff every registered
    eye contributed before the staleness window expired."""

    frame_index: int
    frames: dict[str, AssembledFrame]
    complete: bool
    missing: tuple[str, ...] = ()


class FrameAssembler:
    """Groups per-eye frames of equal index into multi-view sets.

    A set is emitted as soon as every registered eye contributed, or
    flagged incomplete once its oldest frame has waited longer than the
    staleness window. Frames from unregistered eyes and non-increasing
    per-eye indices are rejected and counted, never raised.
    """

    def __init__(
        self,
        eyes,
        stale_after_s: float = DEFAULT_STALE_AFTER_S,
        clock=time.monotonic,
        max_pending: int = 256,
    ):
        eyes = tuple(eyes)
        if not eyes:
            raise ValueError("at least one registered eye is required")
        if len(set(eyes)) != len(eyes):
            raise ValueError("duplicate eye ids")
        self.eyes = eyes
        self.stale_after_s = float(stale_after_s)
        self.clock = clock
        self.max_pending = max_pending
        self.last_index: dict[str, int] = {}
        self.order_errors: dict[str, int] = {eye: 0 for eye in eyes}
        self.unknown_frames: dict[str, int] = {}
        self._pending: dict[int, dict[str, AssembledFrame]] = {}
        self._first_seen: dict[int, float] = {}

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def add(self, frame: AssembledFrame) -> list[MultiViewSet]:
        """Feed one frame; returns the sets this completed or forced out."""
        eye_id = frame.message.eye_id
        if eye_id not in self.order_errors:
            self.unknown_frames[eye_id] = self.unknown_frames.get(eye_id, 0) + 1
            return []
        index = frame.message.frame_index
        last = self.last_index.get(eye_id)
        if last is not None and index <= last:
            self.order_errors[eye_id] += 1
            return []
        self.last_index[eye_id] = index

        bucket = self._pending.setdefault(index, {})
        self._first_seen.setdefault(index, self.clock())
        bucket[eye_id] = frame

        emitted = []
        if len(bucket) == len(self.eyes):
            emitted.append(self._pop(index))
        while len(self._pending) > self.max_pending:
            emitted.append(self._pop(min(self._pending)))
        return emitted

    def evict_stale(self) -> list[MultiViewSet]:
        """Flush pending sets older than the staleness window, flagged."""
        now = self.clock()
        expired = sorted(
            index
            for index, seen in self._first_seen.items()
            if now - seen > self.stale_after_s
        )
        return [self._pop(index) for index in expired]

    def _pop(self, index: int) -> MultiViewSet:
        frames = self._pending.pop(index)
        self._first_seen.pop(index, None)
        missing = tuple(eye for eye in self.eyes if eye not in frames)
        return MultiViewSet(index, frames, complete=not missing, missing=missing)


class EyeTelemetry:
    """Arrival statistics for one eye, kept by the orchestrator."""

    def __init__(self, eye_id: str, expected: bool):
        self.eye_id = eye_id
        self.expected = expected
        self.frames = 0
        self.decode_errors = 0
        self.last_index: int | None = None
        self.last_timestamp_us: int | None = None
        self.last_arrival: float | None = None
        self.last_error = ""
        self._arrivals: deque[float] = deque(maxlen=30)

    def on_frame(self, message: FrameMessage, now: float) -> None:
        self.frames += 1
        self.last_index = message.frame_index
        self.last_timestamp_us = message.timestamp_us
        self.last_arrival = now
        self._arrivals.append(now)

    def fps(self) -> float:
        if len(self._arrivals) < 2:
            return 0.0
        span = self._arrivals[-1] - self._arrivals[0]
        if span <= 0:
            return 0.0
        return (len(self._arrivals) - 1) / span

    def status(self, now: float, stale_after_s: float) -> dict:
        stale = self.last_arrival is None or now - self.last_arrival > stale_after_s
        return {
            "id": self.eye_id,
            "expected": self.expected,
            "frames": self.frames,
            "decode_errors": self.decode_errors,
            "last_index": self.last_index,
            "last_timestamp_us": self.last_timestamp_us,
            "fps": round(self.fps(), 2),
            "stale": stale,
            "last_error": self.last_error,
        }


@dataclass
class OrchestratorConfig:
    broker_host: str
    broker_port: int
    eyes: tuple[str, ...]
    stale_after_s: float = DEFAULT_STALE_AFTER_S
    recording_dir: str | None = None
    record_on_start: bool = False
    set_queue_size: int = 64
    decode_queue_size: int = 256


@dataclass
class CalibrationSettings:
    """Everything the calibration runner needs beyond the frames. The
    sampling bounds describe where eyes may sit; ``sampling.sensors`` is
    overridden by the actual rig size."""

    structure: StructureModel = field(default_factory=default_structure)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    grid_config: GridSearchConfig = field(default_factory=GridSearchConfig)
    crf: CrfParams = field(default_factory=CrfParams)
    icp: IcpOptions = field(default_factory=IcpOptions)
    min_region_px: int = 50
    model_spacing_m: float = 0.02
    eval_radius_m: float = 0.05

    def to_dict(self) -> dict:
        return {
            "sampling_sensors": self.sampling.sensors,
            "grid": self.grid_config.to_dict(),
            "crf": self.crf.to_dict(),
            "icp": self.icp.to_dict(),
            "min_region_px": self.min_region_px,
            "model_spacing_m": self.model_spacing_m,
            "eval_radius_m": self.eval_radius_m,
        }


class Orchestrator:
    """Assembles multi-view sets from the broker and serves the rig API.

    Per-eye decoding runs in its own task; a single assembly stage
    consumes decoded frames, so assembly state is never shared.
    """

    def __init__(self, config: OrchestratorConfig, calib: CalibrationSettings | None = None):
        self.config = config
        self.calib = calib or CalibrationSettings()
        self.assembler = FrameAssembler(config.eyes, config.stale_after_s)
        self.telemetry = {eye: EyeTelemetry(eye, expected=True) for eye in config.eyes}
        self.set_queue: asyncio.Queue[MultiViewSet] = asyncio.Queue(config.set_queue_size)
        self.on_set: list = []
        self.latest_set: MultiViewSet | None = None
        self.latest_complete: MultiViewSet | None = None
        self.latest_decoded: dict[str, AssembledFrame] = {}
        self.frames_received = 0
        self.sets_complete = 0
        self.sets_incomplete = 0
        self.sets_queue_dropped = 0
        self.broker_connected = False
        self.recording_path: str | None = None
        self.calibration_result: dict | None = None
        self._calibration_raw: tuple | None = None
        self._job = {
            "state": "idle",
            "stage": "",
            "source": "",
            "error": "",
            "started_at": None,
            "duration_s": None,
        }
        self._labeler: GridSearchLabeler | None = None
        self._client: BrokerClient | None = None
        self._recorder: RecordingWriter | None = None
        self._decode_queues: dict[str, asyncio.Queue] = {}
        self._assembly_queue: asyncio.Queue[AssembledFrame] = asyncio.Queue()
        self._tasks: list[asyncio.Task] = []

    # -- lifecycle ----------------------------------------------------------

    async def start(self) -> None:
        self._client = await BrokerClient.connect(self.config.broker_host, self.config.broker_port)
        await self._client.subscribe("frames.*")
        self.broker_connected = True
        if self.config.record_on_start:
            if not self.config.recording_dir:
                raise OrchestratorError("record_on_start set without a recording_dir")
            self.start_recording(self.config.recording_dir)
        self._tasks.append(asyncio.create_task(self._intake_loop()))
        self._tasks.append(asyncio.create_task(self._assembly_loop()))
        self._tasks.append(asyncio.create_task(self._housekeeping_loop()))

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        self._tasks.clear()
        if self._client is not None:
            await self._client.close()
            self._client = None
        self.broker_connected = False
        if self._recorder is not None:
            self.stop_recording()

    # -- intake / decode / assembly ------------------------------------------

    async def _intake_loop(self) -> None:
        try:
            while True:
                topic, payload = await self._client.next_message()
                if not topic.startswith("frames."):
                    continue
                eye_id = topic.split(".", 1)[1]
                self.frames_received += 1
                if self._recorder is not None:
                    try:
                        self._recorder.append(eye_id, payload)
                    except Exception as exc:
                        log.error("recording failed, stopping it: %s", exc)
                        self.stop_recording()
                queue = self._decode_queues.get(eye_id)
                if queue is None:
                    queue = asyncio.Queue(self.config.decode_queue_size)
                    self._decode_queues[eye_id] = queue
                    self._tasks.append(asyncio.create_task(self._decode_loop(eye_id, queue)))
                await queue.put(payload)
        except ConnectionError:
            log.info("broker stream ended")
            self.broker_connected = False

    async def _decode_loop(self, eye_id: str, queue: asyncio.Queue) -> None:
        telemetry = self.telemetry.get(eye_id)
        if telemetry is None:
            telemetry = EyeTelemetry(eye_id, expected=False)
            self.telemetry[eye_id] = telemetry
        while True:
            payload = await queue.get()
            now = time.monotonic()
            try:
                message = decode_frame_message(payload)
                if message.eye_id != eye_id:
                    raise WireError(
                        f"frame for {message.eye_id!r} published on topic of {eye_id!r}"
                    )
                color = decode_color(message.color_payload)
                depth = decode_depth(message.depth_payload)
                if depth.shape != message.intrinsics.shape:
                    raise DecodeError("depth dimensions disagree with intrinsics")
            except (WireError, DecodeError) as exc:
                telemetry.decode_errors += 1
                telemetry.last_error = str(exc)
                continue
            telemetry.on_frame(message, now)
            frame = AssembledFrame(message, color, depth, now)
            self.latest_decoded[eye_id] = frame
            await self._assembly_queue.put(frame)

    async def _assembly_loop(self) -> None:
        while True:
            frame = await self._assembly_queue.get()
            for mvs in self.assembler.add(frame):
                self._emit(mvs)

    async def _housekeeping_loop(self) -> None:
        interval = min(0.05, self.config.stale_after_s / 4)
        while True:
            await asyncio.sleep(interval)
            for mvs in self.assembler.evict_stale():
                self._emit(mvs)

    def _emit(self, mvs: MultiViewSet) -> None:
        self.latest_set = mvs
        if mvs.complete:
            self.sets_complete += 1
            self.latest_complete = mvs
        else:
            self.sets_incomplete += 1
        try:
            self.set_queue.put_nowait(mvs)
        except asyncio.QueueFull:
            self.set_queue.get_nowait()
            self.set_queue.put_nowait(mvs)
            self.sets_queue_dropped += 1
        for callback in self.on_set:
            callback(mvs)

    # -- control and recording ------------------------------------------------

    async def send_control(self, verb: str, target: str = "all", params: dict | None = None) -> None:
        if self._client is None:
            raise OrchestratorError("not connected to a broker")
        message = ControlMessage(verb, target, params or {})
        await self._client.publish(message.topic, message.encode())

    def start_recording(self, directory: str) -> str:
        if self._recorder is not None:
            raise OrchestratorError(f"already recording to {self.recording_path}")
        self._recorder = RecordingWriter(directory)
        self.recording_path = str(Path(directory))
        return self.recording_path

    def stop_recording(self) -> str | None:
        if self._recorder is None:
            return None
        path = self.recording_path
        self._recorder.close()
        self._recorder = None
        self.recording_path = None
        return path

    # -- calibration -----------------------------------------------------------

    def calibration_status(self) -> dict:
        status = dict(self._job)
        status["has_result"] = self.calibration_result is not None
        return status

    async def run_calibration(self, recording: str | None = None) -> dict:
        """Run the full pipeline on the newest complete set (or on a
        recording) and return the serialized result. One run at a time."""
        if self._job["state"] == "running":
            raise OrchestratorError("calibration is already running")
        if recording is None:
            snap = self.latest_complete
            if snap is None:
                raise OrchestratorError("no complete multi-view set received yet")
            eye_ids = list(self.config.eyes)
            depths = [snap.frames[eye].depth for eye in eye_ids]
            intrinsics = [snap.frames[eye].message.intrinsics for eye in eye_ids]
            source = f"live:frame{snap.frame_index}"
        else:
            eye_ids, depths, intrinsics = await asyncio.to_thread(
                self._load_recording_set, recording
            )
            source = f"recording:{recording}"
        if any(k != intrinsics[0] for k in intrinsics[1:]):
            raise OrchestratorError("eyes disagree on intrinsics; calibrate a homogeneous rig")

        self._job.update(
            state="running", stage="starting", source=source, error="",
            started_at=time.time(), duration_s=None,
        )
        t0 = time.monotonic()
        try:
            result = await asyncio.to_thread(self._calibrate_blocking, depths, intrinsics[0])
        except Exception as exc:
            self._job.update(state="failed", stage="", error=str(exc),
                             duration_s=round(time.monotonic() - t0, 2))
            raise OrchestratorError(f"calibration failed: {exc}") from exc
        self._job.update(state="done", stage="", duration_s=round(time.monotonic() - t0, 2))
        self._calibration_raw = (result, eye_ids, intrinsics[0])
        self.calibration_result = result_to_dict(result, eye_ids, self.calib.to_dict())
        return self.calibration_result

    def _calibrate_blocking(self, depths, intrinsics: Intrinsics):
        labeler = self._labeler_for(len(depths))

        def stage(text: str) -> None:
            self._job["stage"] = text

        return calibrate(
            depths,
            intrinsics,
            self.calib.structure,
            labeler,
            crf_params=self.calib.crf,
            icp_options=self.calib.icp,
            min_region_px=self.calib.min_region_px,
            model_spacing_m=self.calib.model_spacing_m,
            eval_radius_m=self.calib.eval_radius_m,
            progress=stage,
        )

    def _labeler_for(self, sensors: int) -> GridSearchLabeler:
        if self._labeler is None or self._labeler.params.sensors != sensors:
            params = replace(self.calib.sampling, sensors=sensors)
            self._labeler = GridSearchLabeler(self.calib.structure, params, self.calib.grid_config)
        return self._labeler

    def _load_recording_set(self, directory: str):
        """Newest frame index present for every rig eye in a recording,
        decoded. The recording must cover exactly the configured rig."""
        recorded = recorded_eyes(directory)
        if sorted(recorded) != sorted(self.config.eyes):
            raise OrchestratorError(
                f"recording covers {recorded}, the rig expects {sorted(self.config.eyes)}"
            )
        try:
            return load_latest_set(directory, list(self.config.eyes))
        except RecordingError as exc:
            raise OrchestratorError(str(exc)) from exc

    def calibration_cloud(self, max_points_per_view: int = 1500) -> dict | None:
        """Decimated registered clouds, camera frusta and the structure
        wireframe, everything in the structure frame, for the viewer."""
        if self._calibration_raw is None:
            return None
        result, eye_ids, intrinsics = self._calibration_raw
        views = []
        clouds = result.clouds or [None] * len(eye_ids)
        for eye, pose, cloud in zip(eye_ids, result.poses, clouds):
            if pose is None or cloud is None:
                continue
            sub = cloud.subsample(max_points_per_view)
            points = pose.apply(sub.points)
            views.append({"eye": eye, "points": np.round(points, 4).tolist()})
        frusta = []
        k = intrinsics
        corner_px = [(0, 0), (k.width - 1, 0), (k.width - 1, k.height - 1), (0, k.height - 1)]
        depth = 0.3
        for eye, pose in zip(eye_ids, result.poses):
            if pose is None:
                continue
            rays = np.array(
                [[(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth] for u, v in corner_px]
            )
            frusta.append(
                {
                    "eye": eye,
                    "apex": np.round(pose.translation, 4).tolist(),
                    "corners": np.round(pose.apply(rays), 4).tolist(),
                }
            )
        wires = [
            np.round(side.corners(), 4).tolist() for side in self.calib.structure.sides
        ]
        return {"views": views, "frusta": frusta, "structure": wires}

    # -- status / previews ------------------------------------------------------

    def status(self) -> dict:
        now = time.monotonic()
        ordered = list(self.config.eyes) + sorted(
            eye for eye in self.telemetry if eye not in self.config.eyes
        )
        return {
            "broker_connected": self.broker_connected,
            "eyes": [self.telemetry[eye].status(now, self.config.stale_after_s) for eye in ordered],
            "frames_received": self.frames_received,
            "sets": {
                "complete": self.sets_complete,
                "incomplete": self.sets_incomplete,
                "queue_dropped": self.sets_queue_dropped,
                "pending": self.assembler.pending_count,
            },
            "order_errors": dict(self.assembler.order_errors),
            "unknown_frames": dict(self.assembler.unknown_frames),
            "recording": self.recording_path,
            "calibration": self.calibration_status(),
        }

    def preview(self, eye_id: str) -> dict | None:
        """Latest color JPEG (as published) and a depth colormap JPEG."""
        frame = self.latest_decoded.get(eye_id)
        if frame is None:
            return None
        depth_jpeg = encode_color(depth_color_image(frame.depth), 85)
        return {
            "eye_id": eye_id,
            "frame_index": frame.message.frame_index,
            "timestamp_us": frame.message.timestamp_us,
            "color_jpeg_base64": base64.b64encode(frame.message.color_payload).decode(),
            "depth_jpeg_base64": base64.b64encode(depth_jpeg).decode(),
        }

    def event_snapshot(self, preview_stride: int = 4, preview_quality: int = 70) -> dict:
        """One WebSocket payload: status plus downsampled previews."""
        snapshot = {"type": "status", **self.status()}
        previews = {}
        for eye_id, frame in list(self.latest_decoded.items()):
            small = np.ascontiguousarray(frame.color[::preview_stride, ::preview_stride])
            previews[eye_id] = {
                "frame_index": frame.message.frame_index,
                "jpeg_base64": base64.b64encode(encode_color(small, preview_quality)).decode(),
            }
        snapshot["previews"] = previews
        return snapshot


def create_app(orchestrator: Orchestrator, static_dir: str | None = None):
    """FastAPI application over a started orchestrator."""
    from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="vcap orchestrator")

    @app.get("/status")
    async def status():
        return orchestrator.status()

    @app.get("/eyes")
    async def eyes():
        return orchestrator.status()["eyes"]

    @app.post("/eyes/{eye_id}/params")
    async def set_params(eye_id: str, params: dict):
        known = eye_id == "all" or eye_id in orchestrator.telemetry
        if not known:
            raise HTTPException(404, f"unknown eye {eye_id!r}")
        try:
            await orchestrator.send_control("set-params", eye_id, params)
        except (OrchestratorError, WireError) as exc:
            raise HTTPException(409, str(exc))
        return {"ok": True, "target": eye_id}

    @app.post("/record/start")
    async def record_start(body: dict | None = None):
        directory = (body or {}).get("directory") or orchestrator.config.recording_dir
        if not directory:
            raise HTTPException(400, "no recording directory given or configured")
        try:
            path = orchestrator.start_recording(directory)
        except OrchestratorError as exc:
            raise HTTPException(409, str(exc))
        return {"recording": path}

    @app.post("/record/stop")
    async def record_stop():
        path = orchestrator.stop_recording()
        if path is None:
            raise HTTPException(409, "not recording")
        return {"stopped": path}

    @app.post("/calibrate")
    async def run_calibration(body: dict | None = None):
        try:
            return await orchestrator.run_calibration((body or {}).get("recording"))
        except OrchestratorError as exc:
            raise HTTPException(409, str(exc))

    @app.get("/calibration")
    async def calibration():
        return {
            "job": orchestrator.calibration_status(),
            "result": orchestrator.calibration_result,
        }

    @app.get("/calibration/cloud")
    async def calibration_cloud():
        cloud = orchestrator.calibration_cloud()
        if cloud is None:
            raise HTTPException(404, "no calibration result yet")
        return cloud

    @app.get("/preview/{eye_id}")
    async def preview(eye_id: str):
        data = orchestrator.preview(eye_id)
        if data is None:
            raise HTTPException(404, f"no frame received from {eye_id!r} yet")
        return data

    @app.websocket("/events")
    async def events(websocket: WebSocket):
        await websocket.accept()
        try:
            while True:
                await websocket.send_json(orchestrator.event_snapshot())
                await asyncio.sleep(1.0)
        except WebSocketDisconnect:
            pass

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="panel")
    return app
