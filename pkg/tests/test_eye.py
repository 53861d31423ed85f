"""Eye service behaviour on a live loopback broker: frame cadence,
control verbs, parameter updates, and recording replay."""

import asyncio
import socket

import numpy as np
import pytest

from vcap.capture.broker import Broker, BrokerClient
from vcap.capture.codec import decode_color, decode_depth
from vcap.capture.eye import EyeConfig, EyeError, EyeService
from vcap.capture.recording import RecordingWriter
from vcap.capture.wire import ControlMessage, FrameMessage, decode_frame_message
from vcap.geometry import DEFAULT_INTRINSICS
from vcap.noise import NoiseParams
from vcap.sampling import default_rig


def run(coro):
    return asyncio.run(asyncio.wait_for(coro, timeout=60))


def eye_pose():
    return default_rig(4, seed=0, aimed=True)[0].pose


async def rig_up(config_kwargs):
    broker = Broker("127.0.0.1", 0)
    await broker.start()
    host, port = broker.address
    sub = await BrokerClient.connect(host, port)
    await sub.subscribe("frames.*")
    ctl = await BrokerClient.connect(host, port)
    await asyncio.sleep(0.05)
    cfg = EyeConfig(broker_host=host, broker_port=port, **config_kwargs)
    return broker, sub, ctl, EyeService(cfg)


async def collect(sub, n, per_message=10.0):
    out = []
    for _ in range(n):
        out.append(await asyncio.wait_for(sub.next_message(), timeout=per_message))
    return out


async def quiet(sub, window=0.3):
    """Assert that nothing arrives within the window."""
    with pytest.raises(asyncio.TimeoutError):
        await asyncio.wait_for(sub.next_message(), timeout=window)


async def teardown(broker, sub, ctl, task=None):
    if task is not None and not task.done():
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass
    await sub.close()
    await ctl.close()
    await broker.stop()


def test_publishes_decodable_frames_with_virtual_clock():
    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="eye1", pose=eye_pose(), fps=30.0, max_frames=5,
                 noise=NoiseParams(seed=3))
        )
        await eye.run()
        raws = await collect(sub, 5)
        assert eye.frames_published == 5
        step = round(1_000_000 / 30.0)
        for i, (topic, raw) in enumerate(raws):
            assert topic == "frames.eye1"
            msg = decode_frame_message(raw)
            assert msg.eye_id == "eye1"
            assert msg.frame_index == i
            assert msg.timestamp_us == i * step
            assert msg.intrinsics == DEFAULT_INTRINSICS
            depth = decode_depth(msg.depth_payload)
            assert depth.shape == (180, 320)
            assert np.all(depth >= 0) and np.all(depth <= 16.0)
            color = decode_color(msg.color_payload)
            assert color.shape == (180, 320, 3) and color.dtype == np.uint8
        await quiet(sub)
        await teardown(broker, sub, ctl)

    run(scenario())


def test_stop_and_start_keep_indices_monotonic():
    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="eye1", pose=eye_pose(), fps=100.0, realtime=True,
                 noise=NoiseParams(seed=3))
        )
        task = asyncio.create_task(eye.run())
        before = await collect(sub, 3)
        await ctl.publish("control.all", ControlMessage("stop").encode())
        tail = []
        while True:
            try:
                tail.append(await asyncio.wait_for(sub.next_message(), timeout=0.3))
            except asyncio.TimeoutError:
                break
        await quiet(sub)
        await ctl.publish("control.eye1", ControlMessage("start", "eye1").encode())
        after = await collect(sub, 3)
        indices = [decode_frame_message(r).frame_index for _, r in before + tail + after]
        assert indices == list(range(len(indices)))
        await teardown(broker, sub, ctl, task)

    run(scenario())


def test_snapshot_publishes_exactly_one_frame_while_stopped():
    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="eye1", pose=eye_pose(), fps=100.0, realtime=True,
                 autostart=False, noise=NoiseParams(seed=3))
        )
        task = asyncio.create_task(eye.run())
        await quiet(sub)
        await ctl.publish("control.eye1", ControlMessage("snapshot", "eye1").encode())
        (topic, raw), = await collect(sub, 1)
        assert decode_frame_message(raw).frame_index == 0
        await quiet(sub)
        await teardown(broker, sub, ctl, task)

    run(scenario())


def test_set_params_resolution_respects_target():
    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="eye1", pose=eye_pose(), fps=100.0, realtime=True,
                 noise=NoiseParams(seed=3))
        )
        task = asyncio.create_task(eye.run())
        (_, raw), = await collect(sub, 1)
        assert decode_frame_message(raw).intrinsics.width == 320

        # delivered on the shared topic but aimed at someone else: ignored
        other = ControlMessage("set-params", "eyeZ", {"resolution": [160, 90]})
        await ctl.publish("control.all", other.encode())
        await asyncio.sleep(0.2)
        (_, raw), = await collect(sub, 1)
        assert decode_frame_message(raw).intrinsics.width == 320

        mine = ControlMessage("set-params", "eye1", {"resolution": [160, 90]})
        await ctl.publish("control.eye1", mine.encode())
        deadline = asyncio.get_running_loop().time() + 10
        while True:
            (_, raw), = await collect(sub, 1)
            msg = decode_frame_message(raw)
            if msg.intrinsics.width == 160:
                break
            assert asyncio.get_running_loop().time() < deadline
        assert msg.intrinsics.height == 90
        assert msg.intrinsics.fx == pytest.approx(DEFAULT_INTRINSICS.fx / 2)
        assert decode_depth(msg.depth_payload).shape == (90, 160)
        await teardown(broker, sub, ctl, task)

    run(scenario())


def test_rejected_params_do_not_kill_the_stream():
    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="eye1", pose=eye_pose(), fps=100.0, realtime=True,
                 noise=NoiseParams(seed=3))
        )
        task = asyncio.create_task(eye.run())
        await collect(sub, 1)
        bad = ControlMessage("set-params", "eye1", {"fps": -5})
        await ctl.publish("control.eye1", bad.encode())
        worse = ControlMessage("set-params", "eye1", {"jpeg_quality": 900})
        await ctl.publish("control.eye1", worse.encode())
        await ctl.publish("control.eye1", b"{not json")
        await asyncio.sleep(0.2)
        raws = await collect(sub, 2)
        assert all(decode_frame_message(r).eye_id == "eye1" for _, r in raws)
        assert eye.config.fps == 100.0
        await teardown(broker, sub, ctl, task)

    run(scenario())


def test_replay_republishes_recorded_bytes(tmp_path):
    stored = []
    with RecordingWriter(tmp_path) as writer:
        for i in range(4):
            msg = FrameMessage(
                eye_id="r1", frame_index=i, timestamp_us=i * 1000,
                intrinsics=DEFAULT_INTRINSICS,
                color_payload=b"\xff\xd8 jpeg " + bytes([i]),
                depth_payload=b"depth " + bytes([i]),
            )
            raw = msg.encode()
            stored.append(raw)
            writer.append("r1", raw)

    async def scenario():
        broker, sub, ctl, eye = await rig_up(
            dict(eye_id="r1", pose=eye_pose(), replay_path=tmp_path / "r1.vrec")
        )
        await eye.run()
        raws = [raw for _, raw in await collect(sub, 4)]
        assert raws == stored
        await quiet(sub)
        await teardown(broker, sub, ctl)

    run(scenario())


def test_connect_failure_raises_eye_error():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        free_port = s.getsockname()[1]

    async def scenario():
        eye = EyeService(EyeConfig(
            eye_id="eye1", pose=eye_pose(), broker_host="127.0.0.1",
            broker_port=free_port, connect_attempts=2,
        ))
        with pytest.raises(EyeError, match="cannot reach broker"):
            await eye.run()

    run(scenario())


def test_eye_requires_an_id():
    with pytest.raises(EyeError):
        EyeService(EyeConfig(eye_id="", pose=eye_pose()))
