"""Wire formats: frame and control messages, topic rules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcap.capture.wire import (
    CONTROL_VERBS,
    ControlMessage,
    FrameMessage,
    WireError,
    decode_control_message,
    decode_frame_message,
    topic_matches,
    validate_topic,
)
from vcap.geometry import DEFAULT_INTRINSICS, Intrinsics


def sample_frame(eye_id="eye1", index=7):
    return FrameMessage(
        eye_id=eye_id,
        frame_index=index,
        timestamp_us=123456789,
        intrinsics=DEFAULT_INTRINSICS,
        color_payload=b"\xff\xd8jpegdata",
        depth_payload=b"depthdata" * 3,
    )


def test_frame_round_trip():
    msg = sample_frame()
    out = decode_frame_message(msg.encode())
    assert out.eye_id == msg.eye_id
    assert out.frame_index == msg.frame_index
    assert out.timestamp_us == msg.timestamp_us
    assert out.intrinsics == msg.intrinsics
    assert out.color_payload == msg.color_payload
    assert out.depth_payload == msg.depth_payload


@given(
    st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=16),
    st.integers(0, 2**63 - 1),
    st.integers(0, 2**63 - 1),
    st.binary(max_size=200),
    st.binary(max_size=200),
)
@settings(max_examples=60, deadline=None)
def test_frame_round_trip_property(eye_id, index, stamp, color, depth):
    msg = FrameMessage(eye_id, index, stamp, DEFAULT_INTRINSICS, color, depth)
    out = decode_frame_message(msg.encode())
    assert out.eye_id == msg.eye_id
    assert out.frame_index == msg.frame_index
    assert out.timestamp_us == msg.timestamp_us
    assert out.intrinsics == msg.intrinsics
    assert out.color_payload == msg.color_payload
    assert out.depth_payload == msg.depth_payload


def test_frame_rejects_corruption():
    data = sample_frame().encode()
    with pytest.raises(WireError):
        decode_frame_message(data[:10])
    with pytest.raises(WireError):
        decode_frame_message(b"")
    with pytest.raises(WireError):
        decode_frame_message(data[:-3])
    with pytest.raises(WireError):
        decode_frame_message(data + b"trailing")


def test_frame_rejects_oversized_eye_id():
    with pytest.raises(WireError):
        FrameMessage("e" * 64, 0, 0, DEFAULT_INTRINSICS, b"", b"").encode()


def test_control_round_trip():
    msg = ControlMessage("set-params", "eye2", {"fps": 5.0, "jpeg_quality": 70})
    out = decode_control_message(msg.encode())
    assert out.verb == "set-params"
    assert out.target == "eye2"
    assert out.params == {"fps": 5.0, "jpeg_quality": 70}


def test_control_verbs_are_validated():
    for verb in CONTROL_VERBS:
        decoded = decode_control_message(ControlMessage(verb, "all", {}).encode())
        assert decoded.verb == verb
    with pytest.raises(WireError):
        ControlMessage("reboot", "all", {}).encode()
    with pytest.raises(WireError):
        decode_control_message(b'{"verb": "reboot", "target": "all", "params": {}}')
    with pytest.raises(WireError):
        decode_control_message(b"not json")


def test_topic_validation():
    assert validate_topic("frames.eye1") == "frames.eye1"
    assert validate_topic("frames.*", pattern=True) == "frames.*"
    with pytest.raises(WireError):
        validate_topic("")
    with pytest.raises(WireError):
        validate_topic("frames.*")  # wildcard needs pattern mode
    with pytest.raises(WireError):
        validate_topic("has space")


def test_topic_matching_rules():
    assert topic_matches("frames.*", "frames.eye1")
    assert topic_matches("frames.eye1", "frames.eye1")
    assert not topic_matches("frames.*", "control.eye1")
    assert not topic_matches("frames.eye1", "frames.eye2")
    assert not topic_matches("frames.*", "frames")


def test_intrinsics_survive_the_wire():
    k = Intrinsics(fx=101.5, fy=99.25, cx=32.0, cy=24.0, width=64, height=48)
    msg = FrameMessage("e", 0, 0, k, b"", b"")
    out = decode_frame_message(msg.encode())
    assert out.intrinsics.fx == pytest.approx(k.fx)
    assert out.intrinsics.width == k.width


@given(st.binary(min_size=0, max_size=120))
@settings(max_examples=150, deadline=None)
def test_frame_decode_fuzz(blob):
    try:
        decode_frame_message(blob)
    except WireError:
        pass
