"""Frame payload codecs.

Depth: quantise to millimetre uint16, split into fixed blocks, transpose
bytes within each block (groups the low bytes and high bytes, which
compress far better separately), then deflate. The header carries enough
to validate a stream before trusting it; decode is bit-exact against the
quantised raster and raises DecodeError on anything malformed.

Color: baseline JPEG via Pillow.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(ValueError):
    """Payload cannot be decoded: wrong magic, corrupt stream, bad sizes."""


DEPTH_MAGIC = 0x5A444D31  # "1MDZ" little-endian on the wire
DEPTH_VERSION = 1
DEPTH_BLOCK_BYTES = 8192  # even, so blocks hold whole uint16 samples

_HEADER = struct.Struct("<IHHHHII")  # magic, version, width, height, block, raw_len, crc32


def quantize_depth(depth: np.ndarray) -> np.ndarray:
    """Millimetre quantisation used on the wire (uint16, 0 = invalid)."""
    d = np.asarray(depth, dtype=np.float64)
    return np.clip(np.round(d * 1000.0), 0, 65535).astype("<u2")


def _shuffle(block: bytes) -> bytes:
    arr = np.frombuffer(block, dtype=np.uint8)
    return arr.reshape(-1, 2).T.tobytes()


def _unshuffle(block: bytes) -> bytes:
    arr = np.frombuffer(block, dtype=np.uint8)
    half = len(arr) // 2
    return arr.reshape(2, half).T.tobytes()


def encode_depth(depth: np.ndarray) -> bytes:
    """Compress a depth raster (metres in, millimetre-quantised on wire)."""
    q = quantize_depth(depth)
    h, w = q.shape
    if w > 65535 or h > 65535:
        raise DecodeError("raster too large for the header")
    raw = q.tobytes()
    shuffled = b"".join(
        _shuffle(raw[off : off + DEPTH_BLOCK_BYTES])
        for off in range(0, len(raw), DEPTH_BLOCK_BYTES)
    )
    payload = zlib.compress(shuffled, 6)
    header = _HEADER.pack(
        DEPTH_MAGIC, DEPTH_VERSION, w, h, DEPTH_BLOCK_BYTES, len(raw), zlib.crc32(raw)
    )
    return header + payload


def decode_depth(payload: bytes) -> np.ndarray:
    """Inverse of encode_depth; returns metres. Never returns garbage:
    any inconsistency raises DecodeError."""
    if len(payload) < _HEADER.size:
        raise DecodeError("depth payload shorter than its header")
    magic, version, w, h, block, raw_len, crc = _HEADER.unpack_from(payload)
    if magic != DEPTH_MAGIC:
        raise DecodeError("bad depth payload magic")
    if version != DEPTH_VERSION:
        raise DecodeError(f"unsupported depth codec version {version}")
    if block <= 0 or block % 2:
        raise DecodeError("invalid block size")
    if raw_len != 2 * w * h or raw_len == 0:
        raise DecodeError("raster size does not match header")
    try:
        shuffled = zlib.decompress(payload[_HEADER.size :])
    except zlib.error as exc:
        raise DecodeError(f"corrupt depth stream: {exc}") from exc
    if len(shuffled) != raw_len:
        raise DecodeError("decompressed size does not match header")
    raw = b"".join(
        _unshuffle(shuffled[off : off + block])
        for off in range(0, len(shuffled), block)
    )
    if zlib.crc32(raw) != crc:
        raise DecodeError("depth checksum mismatch")
    mm = np.frombuffer(raw, dtype="<u2").reshape(h, w)
    return mm.astype(np.float64) / 1000.0


def encode_color(rgb: np.ndarray, quality: int = 90) -> bytes:
    """Baseline JPEG."""
    img = np.asarray(rgb)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DecodeError("color image must be (H, W, 3) uint8")
    if not 1 <= quality <= 100:
        raise DecodeError("JPEG quality must be 1..100")
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, "JPEG", quality=quality)
    return buf.getvalue()


def decode_color(payload: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(payload))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"corrupt color payload: {exc}") from exc
    return np.asarray(img.convert("RGB"))
