"""Frame codecs: lossless depth round trips, JPEG color, corrupt input."""

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcap.capture.codec import (
    DEPTH_MAGIC,
    DecodeError,
    decode_color,
    decode_depth,
    encode_color,
    encode_depth,
    quantize_depth,
)
from vcap.geometry import DEFAULT_INTRINSICS
from vcap.noise import NoiseParams, corrupt


def random_depth(rng, shape=(60, 80), hole_fraction=0.2):
    depth = rng.uniform(0.2, 6.0, shape)
    depth[rng.random(shape) < hole_fraction] = 0.0
    return depth


def test_quantize_snaps_to_millimetres():
    depth = np.array([[0.0, 1.2349, 2.0004], [0.9996, 15.9994, 0.0001]])
    q = quantize_depth(depth)
    assert q.dtype == np.uint16
    np.testing.assert_array_equal(q, [[0, 1235, 2000], [1000, 15999, 0]])
    # out-of-range input clips instead of raising
    assert quantize_depth(np.array([[-3.0, 1e6]])).tolist() == [[0, 65535]]


def test_depth_round_trip_preserves_quantized_values():
    rng = np.random.default_rng(0)
    for _ in range(20):
        depth = quantize_depth(random_depth(rng)) / 1000.0  # metres, on-grid
        out = decode_depth(encode_depth(depth))
        np.testing.assert_array_equal(out, depth)
        assert out.dtype == np.float64


def test_depth_round_trip_on_rendered_views(clean_views, noisy_depths):
    for view, noisy in zip(clean_views, noisy_depths):
        for raster in (view.depth, noisy):
            q = quantize_depth(raster).astype(np.float64) / 1000.0
            np.testing.assert_array_equal(decode_depth(encode_depth(raster)), q)


def test_encode_quantizes_unquantized_input():
    depth = np.full((16, 16), 1.23456789)
    out = decode_depth(encode_depth(depth))
    np.testing.assert_allclose(out, 1.235, atol=1e-9)


def test_compression_beats_raw_on_rendered_scenes(clean_views, noisy_depths):
    # Structured scenes compress well; 2x against raw uint16 is the floor.
    for raster in [clean_views[0].depth, noisy_depths[0]]:
        raw = raster.size * 2
        encoded = len(encode_depth(raster))
        assert encoded * 2 <= raw


def test_depth_sizes_and_edge_shapes():
    rng = np.random.default_rng(1)
    for shape in ((1, 1), (1, 300), (7, 13), (180, 320)):
        depth = rng.uniform(0, 10, shape)
        assert decode_depth(encode_depth(depth)).shape == shape


def test_depth_rejects_bad_input():
    with pytest.raises(Exception):
        encode_depth(np.zeros((4, 4, 4)))
    # beyond the uint16 range the codec clips rather than raising
    np.testing.assert_allclose(decode_depth(encode_depth(np.full((4, 4), 70.0))), 65.535)


def test_decode_rejects_corrupt_streams():
    depth = quantize_depth(np.random.default_rng(2).uniform(0, 5, (24, 32)))
    good = encode_depth(depth)
    with pytest.raises(DecodeError):
        decode_depth(b"")
    with pytest.raises(DecodeError):
        decode_depth(good[:10])
    with pytest.raises(DecodeError):
        decode_depth(b"\x00" * len(good))
    # flip the magic
    bad_magic = struct.pack("<I", DEPTH_MAGIC ^ 0xFF) + good[4:]
    with pytest.raises(DecodeError):
        decode_depth(bad_magic)
    # truncate the zlib body
    with pytest.raises(DecodeError):
        decode_depth(good[:-5])
    # valid header, garbage body
    garbage = good[:20] + b"\xde\xad\xbe\xef" * 8
    with pytest.raises(DecodeError):
        decode_depth(garbage)


@given(st.binary(min_size=0, max_size=400))
@settings(max_examples=200, deadline=None)
def test_decode_never_crashes_on_fuzz(blob):
    try:
        decode_depth(blob)
    except DecodeError:
        pass


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_depth_property_round_trip(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(1, 40))
    w = int(rng.integers(1, 40))
    depth = quantize_depth(random_depth(rng, (h, w))) / 1000.0
    np.testing.assert_array_equal(decode_depth(encode_depth(depth)), depth)


def test_tampered_payload_fails_or_differs():
    # Flipping one byte inside the compressed body must never silently
    # produce the original raster.
    depth = quantize_depth(np.random.default_rng(3).uniform(0, 5, (24, 32))) / 1000.0
    good = bytearray(encode_depth(depth))
    good[24] ^= 0x01
    try:
        out = decode_depth(bytes(good))
    except DecodeError:
        return
    assert not np.array_equal(out, depth)


def test_color_round_trip_shape_and_quality():
    rng = np.random.default_rng(4)
    rgb = (rng.uniform(0, 255, (45, 60, 3))).astype(np.uint8)
    payload = encode_color(rgb, quality=90)
    out = decode_color(payload)
    assert out.shape == rgb.shape
    assert out.dtype == np.uint8
    # JPEG is lossy but close on smooth content
    smooth = np.tile(np.linspace(0, 255, 60, dtype=np.uint8), (45, 1))
    smooth = np.stack([smooth] * 3, axis=-1)
    out2 = decode_color(encode_color(smooth, quality=95))
    assert np.abs(out2.astype(int) - smooth.astype(int)).mean() < 4.0


def test_color_rejects_garbage():
    with pytest.raises(DecodeError):
        decode_color(b"not a jpeg")
    with pytest.raises(DecodeError):
        decode_color(b"")
    rgb = np.zeros((8, 8, 3), dtype=np.uint8)
    payload = encode_color(rgb)
    with pytest.raises(DecodeError):
        decode_color(payload[: len(payload) // 2])
