"""Raster file I/O for dataset dumps.

Depth goes to 16-bit PGM in millimetres (big-endian sample order, as the
PNM standard requires for maxval > 255), labels to 8-bit PGM, normals to
.npy. A small fixed palette turns label rasters into preview colors.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .geometry import GeometryError, NUM_CLASSES


def write_depth_pgm(path: str | Path, depth: np.ndarray) -> None:
    """Store a depth raster as 16-bit PGM, one millimetre per level."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise GeometryError("depth must be 2-d")
    mm = np.clip(np.round(d * 1000.0), 0, 65535).astype(">u2")
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def write_label_pgm(path: str | Path, labels: np.ndarray) -> None:
    lab = np.asarray(labels)
    if lab.ndim != 2:
        raise GeometryError("labels must be 2-d")
    if lab.max(initial=0) > 255 or lab.min(initial=0) < 0:
        raise GeometryError("labels must fit one byte")
    h, w = lab.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(lab.astype(np.uint8).tobytes())


_PGM_HEADER = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise GeometryError(f"{path}: not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    body = data[m.end():]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = w * h * dtype.itemsize
    if len(body) < expected:
        raise GeometryError(f"{path}: truncated PGM body")
    arr = np.frombuffer(body[:expected], dtype=dtype).reshape(h, w)
    return arr, maxval


def read_depth_pgm(path: str | Path) -> np.ndarray:
    arr, maxval = _read_pgm(path)
    if maxval != 65535:
        raise GeometryError(f"{path}: expected a 16-bit depth PGM")
    return arr.astype(np.float64) / 1000.0


def read_label_pgm(path: str | Path) -> np.ndarray:
    arr, maxval = _read_pgm(path)
    if maxval != 255:
        raise GeometryError(f"{path}: expected an 8-bit label PGM")
    return arr.astype(np.uint8)


def _build_palette(classes: int = NUM_CLASSES) -> np.ndarray:
    """Distinct, stable colors: background black, sides spread over hue."""
    pal = np.zeros((classes, 3), dtype=np.uint8)
    for i in range(1, classes):
        hue = (i - 1) / max(1, classes - 1)
        # cheap hsv-to-rgb with full saturation, alternating brightness
        v = 0.95 if i % 2 else 0.65
        k = hue * 6.0
        sector = int(k) % 6
        f = k - int(k)
        p, q, t = 0.0, v * (1 - f), v * f
        rgb = [
            (v, t, p), (q, v, p), (p, v, t),
            (p, q, v), (t, p, v), (v, p, q),
        ][sector]
        pal[i] = np.round(np.array(rgb) * 255)
    return pal


LABEL_PALETTE = _build_palette()


def label_color_image(labels: np.ndarray) -> np.ndarray:
    """Map a label raster to an RGB uint8 image using the fixed palette."""
    lab = np.asarray(labels)
    if lab.max(initial=0) >= len(LABEL_PALETTE):
        raise GeometryError("label id outside the palette")
    return LABEL_PALETTE[lab]


def depth_color_image(depth: np.ndarray, near: float = 0.5, far: float = 3.5) -> np.ndarray:
    """Map depth to a blue-to-red ramp over [near, far]; invalid pixels black."""
    d = np.asarray(depth, dtype=np.float64)
    if far <= near:
        raise GeometryError("far must exceed near")
    t = np.clip((d - near) / (far - near), 0.0, 1.0)
    img = np.zeros(d.shape + (3,), dtype=np.uint8)
    valid = d > 0
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0, 1)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0, 1)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0, 1)
    ramp = np.stack([r, g, b], axis=-1)
    img[valid] = np.round(ramp[valid] * 255).astype(np.uint8)
    return img
