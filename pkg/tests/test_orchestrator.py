"""Orchestrator internals (set assembly, telemetry) and its HTTP surface."""

import asyncio
import base64

import numpy as np
import pytest

from vcap.capture.broker import Broker, BrokerClient
from vcap.capture.codec import decode_color, encode_color, encode_depth
from vcap.capture.orchestrator import (
    AssembledFrame,
    EyeTelemetry,
    FrameAssembler,
    Orchestrator,
    OrchestratorConfig,
    OrchestratorError,
    create_app,
)
from vcap.capture.recording import iter_recording
from vcap.capture.wire import FrameMessage, decode_control_message
from vcap.geometry import Intrinsics

SMALL_K = Intrinsics(fx=10.0, fy=10.0, cx=4.0, cy=3.0, width=8, height=6)


def run(coro):
    return asyncio.run(asyncio.wait_for(coro, timeout=60))


def small_frame(eye_id, index, intrinsics=SMALL_K, arrived_at=0.0):
    depth = np.full(intrinsics.shape, 1.5)
    msg = FrameMessage(
        eye_id=eye_id,
        frame_index=index,
        timestamp_us=index * 1000,
        intrinsics=intrinsics,
        color_payload=b"jpg",
        depth_payload=b"zzz",
    )
    color = np.zeros((*intrinsics.shape, 3), np.uint8)
    return AssembledFrame(msg, color, depth, arrived_at)


def wire_frame(eye_id, index, intrinsics=SMALL_K, fill=1.5):
    depth = np.full(intrinsics.shape, fill)
    color = np.full((*intrinsics.shape, 3), 128, np.uint8)
    return FrameMessage(
        eye_id=eye_id,
        frame_index=index,
        timestamp_us=index * 1000,
        intrinsics=intrinsics,
        color_payload=encode_color(color, 90),
        depth_payload=encode_depth(depth),
    ).encode()


# -- FrameAssembler ----------------------------------------------------------


class StepClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def test_assembler_emits_complete_set_when_all_eyes_arrive():
    asm = FrameAssembler(("a", "b", "c"))
    assert asm.add(small_frame("a", 0)) == []
    assert asm.add(small_frame("b", 0)) == []
    sets = asm.add(small_frame("c", 0))
    assert len(sets) == 1
    mvs = sets[0]
    assert mvs.complete and mvs.frame_index == 0 and mvs.missing == ()
    assert sorted(mvs.frames) == ["a", "b", "c"]
    assert asm.pending_count == 0


def test_assembler_handles_interleaved_indices():
    asm = FrameAssembler(("a", "b"))
    asm.add(small_frame("a", 0))
    asm.add(small_frame("a", 1))
    first = asm.add(small_frame("b", 0))
    second = asm.add(small_frame("b", 1))
    assert [s.frame_index for s in first] == [0]
    assert [s.frame_index for s in second] == [1]
    assert all(s.complete for s in first + second)


def test_assembler_evicts_stale_sets_as_incomplete():
    clock = StepClock()
    asm = FrameAssembler(("a", "b"), stale_after_s=0.5, clock=clock)
    asm.add(small_frame("a", 3))
    clock.now = 0.4
    assert asm.evict_stale() == []
    clock.now = 0.6
    sets = asm.evict_stale()
    assert len(sets) == 1
    assert not sets[0].complete
    assert sets[0].missing == ("b",)
    assert asm.pending_count == 0


def test_assembler_rejects_non_increasing_indices():
    asm = FrameAssembler(("a", "b"))
    asm.add(small_frame("a", 2))
    assert asm.add(small_frame("a", 2)) == []
    assert asm.add(small_frame("a", 1)) == []
    assert asm.order_errors == {"a": 2, "b": 0}
    assert asm.pending_count == 1


def test_assembler_counts_unknown_eyes():
    asm = FrameAssembler(("a",))
    assert asm.add(small_frame("ghost", 0)) == []
    assert asm.unknown_frames == {"ghost": 1}
    assert asm.pending_count == 0


def test_assembler_force_pops_oldest_when_backlogged():
    asm = FrameAssembler(("a", "b"), max_pending=2)
    asm.add(small_frame("a", 0))
    asm.add(small_frame("a", 1))
    forced = asm.add(small_frame("a", 2))
    assert [s.frame_index for s in forced] == [0]
    assert not forced[0].complete
    assert asm.pending_count == 2


def test_assembler_validates_eyes():
    with pytest.raises(ValueError):
        FrameAssembler(())
    with pytest.raises(ValueError):
        FrameAssembler(("a", "a"))


def test_telemetry_fps_and_staleness():
    t = EyeTelemetry("a", expected=True)
    assert t.fps() == 0.0
    msg = small_frame("a", 0).message
    for i in range(11):
        t.on_frame(msg, i * 0.1)
    assert t.fps() == pytest.approx(10.0)
    fresh = t.status(now=1.1, stale_after_s=0.5)
    assert fresh["stale"] is False and fresh["frames"] == 11
    assert t.status(now=2.0, stale_after_s=0.5)["stale"] is True
    never = EyeTelemetry("b", expected=False).status(now=0.0, stale_after_s=0.5)
    assert never["stale"] is True


# -- live orchestrator over a loopback broker ---------------------------------


async def live_setup(eyes=("a", "b"), **config_kwargs):
    broker = Broker("127.0.0.1", 0)
    await broker.start()
    host, port = broker.address
    orch = Orchestrator(OrchestratorConfig(
        broker_host=host, broker_port=port, eyes=tuple(eyes),
        stale_after_s=0.25, **config_kwargs,
    ))
    await orch.start()
    pub = await BrokerClient.connect(host, port)
    await asyncio.sleep(0.1)
    return broker, orch, pub


async def wait_for(predicate, timeout=10.0):
    loop = asyncio.get_running_loop()
    deadline = loop.time() + timeout
    while not predicate():
        if loop.time() > deadline:
            raise AssertionError("condition not reached in time")
        await asyncio.sleep(0.02)


async def live_teardown(broker, orch, pub):
    await pub.close()
    await orch.stop()
    await broker.stop()


def test_complete_and_incomplete_sets_end_to_end():
    async def scenario():
        broker, orch, pub = await live_setup()
        await pub.publish("frames.a", wire_frame("a", 0))
        await pub.publish("frames.b", wire_frame("b", 0))
        await wait_for(lambda: orch.sets_complete == 1)
        mvs = orch.latest_complete
        assert mvs.frame_index == 0 and sorted(mvs.frames) == ["a", "b"]
        np.testing.assert_allclose(mvs.frames["a"].depth, 1.5)

        await pub.publish("frames.a", wire_frame("a", 1))
        await wait_for(lambda: orch.sets_incomplete == 1)
        assert orch.latest_set.missing == ("b",)
        assert orch.sets_complete == 1

        status = orch.status()
        assert status["frames_received"] == 3
        assert status["sets"] == {
            "complete": 1, "incomplete": 1, "queue_dropped": 0, "pending": 0,
        }
        eye_a = next(e for e in status["eyes"] if e["id"] == "a")
        assert eye_a["frames"] == 2 and eye_a["last_index"] == 1
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_decode_errors_and_unknown_eyes_are_counted():
    async def scenario():
        broker, orch, pub = await live_setup()
        await pub.publish("frames.a", b"garbage")
        await pub.publish("frames.b", wire_frame("a", 0))  # id/topic mismatch
        await pub.publish("frames.z", wire_frame("z", 0))
        await wait_for(lambda: orch.telemetry["a"].decode_errors == 1)
        await wait_for(lambda: orch.telemetry["b"].decode_errors == 1)
        assert "published on topic" in orch.telemetry["b"].last_error
        await wait_for(lambda: orch.assembler.unknown_frames.get("z") == 1)
        status = orch.status()
        unexpected = next(e for e in status["eyes"] if e["id"] == "z")
        assert unexpected["expected"] is False
        assert orch.sets_complete == 0
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_recording_captures_raw_payloads(tmp_path):
    async def scenario():
        rec_dir = tmp_path / "rec"
        broker, orch, pub = await live_setup(
            recording_dir=str(rec_dir), record_on_start=True,
        )
        assert orch.recording_path == str(rec_dir)
        sent = [wire_frame("a", i) for i in range(3)]
        for raw in sent:
            await pub.publish("frames.a", raw)
        await wait_for(lambda: orch.telemetry["a"].frames == 3)
        path = orch.stop_recording()
        assert path == str(rec_dir)
        assert list(iter_recording(rec_dir / "a.vrec")) == sent
        assert orch.stop_recording() is None
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_record_on_start_requires_directory():
    async def scenario():
        broker = Broker("127.0.0.1", 0)
        await broker.start()
        host, port = broker.address
        orch = Orchestrator(OrchestratorConfig(
            broker_host=host, broker_port=port, eyes=("a",), record_on_start=True,
        ))
        with pytest.raises(OrchestratorError, match="recording_dir"):
            await orch.start()
        await orch.stop()
        await broker.stop()

    run(scenario())


def test_send_control_reaches_subscribers():
    async def scenario():
        broker, orch, pub = await live_setup()
        listener = await BrokerClient.connect(*broker.address)
        await listener.subscribe("control.*")
        await asyncio.sleep(0.1)
        await orch.send_control("set-params", "a", {"fps": 5})
        topic, payload = await asyncio.wait_for(listener.next_message(), timeout=5)
        assert topic == "control.a"
        msg = decode_control_message(payload)
        assert msg.verb == "set-params" and msg.params == {"fps": 5}
        await listener.close()
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_calibration_prerequisites_are_enforced(tmp_path):
    async def scenario():
        broker, orch, pub = await live_setup()
        with pytest.raises(OrchestratorError, match="no complete multi-view set"):
            await orch.run_calibration()

        # mixed intrinsics across the rig is refused before any heavy work
        other = Intrinsics(fx=20.0, fy=20.0, cx=4.0, cy=3.0, width=8, height=6)
        await pub.publish("frames.a", wire_frame("a", 0))
        await pub.publish("frames.b", wire_frame("b", 0, intrinsics=other))
        await wait_for(lambda: orch.sets_complete == 1)
        with pytest.raises(OrchestratorError, match="intrinsics"):
            await orch.run_calibration()

        # recording must cover exactly the configured rig
        (tmp_path / "only_a").mkdir()
        (tmp_path / "only_a" / "a.vrec").write_bytes(b"")
        with pytest.raises(OrchestratorError, match="the rig expects"):
            await orch.run_calibration(recording=str(tmp_path / "only_a"))
        assert orch.calibration_status()["state"] == "idle"
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_preview_and_event_snapshot():
    async def scenario():
        broker, orch, pub = await live_setup()
        assert orch.preview("a") is None
        await pub.publish("frames.a", wire_frame("a", 0))
        await wait_for(lambda: "a" in orch.latest_decoded)
        data = orch.preview("a")
        assert data["eye_id"] == "a" and data["frame_index"] == 0
        color = decode_color(base64.b64decode(data["color_jpeg_base64"]))
        assert color.shape == (6, 8, 3)
        depth_img = decode_color(base64.b64decode(data["depth_jpeg_base64"]))
        assert depth_img.shape == (6, 8, 3)

        snap = orch.event_snapshot(preview_stride=2)
        assert snap["type"] == "status"
        assert "a" in snap["previews"]
        small = decode_color(base64.b64decode(snap["previews"]["a"]["jpeg_base64"]))
        assert small.shape == (3, 4, 3)
        await live_teardown(broker, orch, pub)

    run(scenario())


# -- HTTP API -----------------------------------------------------------------


def test_http_api_surface(tmp_path):
    import httpx

    async def scenario():
        broker, orch, pub = await live_setup()
        app = create_app(orch)
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://rig") as api:
            res = await api.get("/status")
            assert res.status_code == 200
            body = res.json()
            assert body["broker_connected"] is True
            assert {e["id"] for e in body["eyes"]} == {"a", "b"}

            res = await api.get("/eyes")
            assert res.status_code == 200 and len(res.json()) == 2

            res = await api.get("/calibration")
            assert res.json() == {
                "job": {
                    "state": "idle", "stage": "", "source": "", "error": "",
                    "started_at": None, "duration_s": None, "has_result": False,
                },
                "result": None,
            }
            assert (await api.get("/calibration/cloud")).status_code == 404
            assert (await api.get("/preview/a")).status_code == 404
            assert (await api.post("/calibrate", json={})).status_code == 409

            res = await api.post("/eyes/ghost/params", json={"fps": 1})
            assert res.status_code == 404
            listener = await BrokerClient.connect(*broker.address)
            await listener.subscribe("control.*")
            await asyncio.sleep(0.1)
            res = await api.post("/eyes/all/params", json={"fps": 7})
            assert res.status_code == 200 and res.json() == {"ok": True, "target": "all"}
            topic, payload = await asyncio.wait_for(listener.next_message(), timeout=5)
            assert topic == "control.all"
            assert decode_control_message(payload).params == {"fps": 7}
            await listener.close()

            assert (await api.post("/record/stop")).status_code == 409
            res = await api.post("/record/start", json={})
            assert res.status_code == 400  # nothing given, nothing configured
            rec_dir = str(tmp_path / "rec")
            res = await api.post("/record/start", json={"directory": rec_dir})
            assert res.status_code == 200 and res.json() == {"recording": rec_dir}
            assert (await api.post("/record/start", json={"directory": rec_dir})).status_code == 409
            await pub.publish("frames.a", wire_frame("a", 0))
            await wait_for(lambda: orch.telemetry["a"].frames == 1)
            res = await api.post("/record/stop")
            assert res.status_code == 200 and res.json() == {"stopped": rec_dir}

            res = await api.get("/preview/a")
            assert res.status_code == 200
            assert res.json()["frame_index"] == 0
        await live_teardown(broker, orch, pub)

    run(scenario())


def test_websocket_events_and_static_mount(tmp_path):
    from fastapi.testclient import TestClient

    async def scenario():
        broker, orch, pub = await live_setup()
        await pub.publish("frames.a", wire_frame("a", 0))
        await wait_for(lambda: "a" in orch.latest_decoded)
        await live_teardown(broker, orch, pub)
        return orch

    # snapshot reads are plain attribute access, so the socket can be
    # served after the capture tasks have stopped
    orch = run(scenario())
    static = tmp_path / "panel"
    static.mkdir()
    (static / "index.html").write_text("<html><body>panel</body></html>")
    app = create_app(orch, static_dir=str(static))
    client = TestClient(app)
    with client.websocket_connect("/events") as ws:
        snap = ws.receive_json()
        assert snap["type"] == "status"
        assert "a" in snap["previews"]
    res = client.get("/")
    assert res.status_code == 200 and "panel" in res.text
    assert client.get("/status").status_code == 200  # API not shadowed
