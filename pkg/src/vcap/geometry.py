"""Core geometric types shared across the rig: camera intrinsics, rigid
poses, depth/normal/label rasters and point clouds.

Conventions used everywhere in this package:

* camera frame: x right, y down, z forward (optical axis);
* structure frame: y up, world units are metres;
* depth rasters store metres, 0 marks an invalid pixel, valid depths lie
  in (0, 16];
* a ``Pose`` maps points from its source frame into its target frame via
  ``R @ p + t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

MAX_DEPTH_M = 16.0
NUM_CLASSES = 25  # background plus 24 structure sides


class GeometryError(ValueError):
    """Malformed geometric input: bad shapes, non-rigid rotations, etc."""


def _as_float_array(value, shape, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise GeometryError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters. Pixel centers sit on integer coordinates,
    so pixel (u, v) with depth d back-projects to
    ((u - cx) / fx * d, (v - cy) / fy * d, d).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics of the same view downsampled by an integer factor."""
        if factor <= 0:
            raise GeometryError("scale factor must be positive")
        return Intrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=max(1, int(np.ceil(self.width / factor))),
            height=max(1, int(np.ceil(self.height / factor))),
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_dict(data: dict) -> "Intrinsics":
        return Intrinsics(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


#: Default sensor intrinsics: a quarter-resolution wide view.
DEFAULT_INTRINSICS = Intrinsics(fx=230.0, fy=230.0, cx=160.0, cy=90.0, width=320, height=180)

_ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p_target = rotation @ p_source + translation``.

    The rotation must be orthonormal with determinant +1 (checked to 1e-9
    on construction).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_float_array(self.rotation, (3, 3), "rotation")
        t = _as_float_array(self.translation, (3,), "translation")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > _ORTHONORMAL_TOL:
            raise GeometryError(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        if np.linalg.det(r) < 0:
            raise GeometryError("rotation has negative determinant (reflection)")
        r = r.copy()
        t = t.copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many (n, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (no translation)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self.compose(other)).apply(p) == self.apply(other.apply(p))."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def rotation_angle_deg(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices, in degrees."""
    trace = np.trace(np.asarray(ra).T @ np.asarray(rb))
    cos = np.clip((trace - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rot_x(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in some frame, optionally with unit normals and the source
    pixel of each point."""

    points: np.ndarray
    normals: np.ndarray | None = None
    pixels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError(f"points must be (n, 3), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise GeometryError("normals must match points in shape")
            object.__setattr__(self, "normals", nrm)
        if self.pixels is not None:
            px = np.asarray(self.pixels)
            if px.shape != (len(pts), 2):
                raise GeometryError("pixels must be (n, 2)")
            object.__setattr__(self, "pixels", px)

    def __len__(self) -> int:
        return len(self.points)

    def subsample(self, max_points: int) -> "PointCloud":
        """Deterministic decimation: keep every k-th point."""
        n = len(self)
        if max_points <= 0:
            raise GeometryError("max_points must be positive")
        if n <= max_points:
            return self
        step = int(np.ceil(n / max_points))
        sel = slice(None, None, step)
        return PointCloud(
            self.points[sel],
            None if self.normals is None else self.normals[sel],
            None if self.pixels is None else self.pixels[sel],
        )


def validate_depth(depth: np.ndarray) -> np.ndarray:
    """Check the depth raster contract: float image, zeros mark invalid
    pixels and valid values lie in (0, 16] metres."""
    d = np.asarray(depth)
    if d.ndim != 2:
        raise GeometryError(f"depth must be 2-d, got shape {d.shape}")
    if not np.issubdtype(d.dtype, np.floating):
        raise GeometryError("depth must be a float raster in metres")
    bad = (d < 0) | (d > MAX_DEPTH_M) | ~np.isfinite(d)
    if bad.any():
        raise GeometryError("depth values outside [0, 16] m")
    return d


def backproject(depth: np.ndarray, intrinsics: Intrinsics) -> PointCloud:
    """Lift valid depth pixels into camera space.

    Output order is row-major over the raster; each point carries its
    source pixel as (u, v).
    """
    d = validate_depth(depth)
    if d.shape != intrinsics.shape:
        raise GeometryError(
            f"depth shape {d.shape} does not match intrinsics {intrinsics.shape}"
        )
    vs, us = np.nonzero(d > 0)
    z = d[vs, us]
    x = (us - intrinsics.cx) / intrinsics.fx * z
    y = (vs - intrinsics.cy) / intrinsics.fy * z
    pts = np.stack([x, y, z], axis=1)
    pixels = np.stack([us, vs], axis=1).astype(np.int32)
    return PointCloud(pts, pixels=pixels)


def project(points: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Project camera-space points to (u, v) pixel coordinates (float)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise GeometryError("cannot project points at or behind the camera plane")
    uv = np.stack(
        [
            intrinsics.fx * pts[:, 0] / z + intrinsics.cx,
            intrinsics.fy * pts[:, 1] / z + intrinsics.cy,
        ],
        axis=1,
    )
    return uv[0] if single else uv


def transform(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Apply a rigid transform to a cloud (rotating normals alongside)."""
    return PointCloud(
        pose.apply(cloud.points),
        None if cloud.normals is None else pose.rotate(cloud.normals),
        cloud.pixels,
    )


def _grid_points(depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Back-project every pixel of the raster, keeping (H, W, 3) layout.
    Invalid pixels produce zero points; callers must mask them."""
    h, w = depth.shape
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    x = (us[None, :] - intrinsics.cx) / intrinsics.fx * depth
    y = (vs[:, None] - intrinsics.cy) / intrinsics.fy * depth
    return np.stack([x, y, depth], axis=-1)


def normals_from_depth(depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Estimate per-pixel surface normals by central differences on the
    back-projected grid.

    A pixel gets a normal only when itself and its four neighbours are
    valid; the result is oriented toward the camera (n . p < 0). Pixels
    without a normal hold zeros.
    """
    d = validate_depth(depth)
    if d.shape != intrinsics.shape:
        raise GeometryError("depth shape does not match intrinsics")
    h, w = d.shape
    out = np.zeros((h, w, 3), dtype=np.float64)
    if h < 3 or w < 3:
        return out
    pts = _grid_points(d, intrinsics)
    valid = d > 0
    ok = (
        valid[1:-1, 1:-1]
        & valid[1:-1, 2:]
        & valid[1:-1, :-2]
        & valid[2:, 1:-1]
        & valid[:-2, 1:-1]
    )
    du = pts[1:-1, 2:] - pts[1:-1, :-2]
    dv = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = np.cross(du, dv)
    length = np.linalg.norm(n, axis=-1)
    ok &= length > 1e-12
    safe = np.where(length > 1e-12, length, 1.0)
    n /= safe[..., None]
    # orient toward the camera
    toward = np.einsum("ijk,ijk->ij", n, pts[1:-1, 1:-1])
    n[toward > 0] *= -1.0
    inner = out[1:-1, 1:-1]
    inner[ok] = n[ok]
    return out


def validate_label_probs(probs: np.ndarray) -> np.ndarray:
    """Check a per-pixel class-probability raster: (H, W, C) rows summing
    to 1 within 1e-5."""
    p = np.asarray(probs)
    if p.ndim != 3:
        raise GeometryError("label probabilities must be (H, W, C)")
    sums = p.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise GeometryError("label probabilities must sum to 1 per pixel")
    if p.min() < 0:
        raise GeometryError("label probabilities must be non-negative")
    return p


class NeighborIndex:
    """Exact nearest-neighbour lookup over a fixed point set.

    Backed by a k-d tree; results are identical to exhaustive search.
    """

    def __init__(self, points: PointCloud | np.ndarray):
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError("index needs an (n, 3) point set")
        if len(pts) == 0:
            raise GeometryError("cannot index an empty point set")
        self._points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def query(self, point: np.ndarray, radius: float) -> tuple[int, float] | None:
        """Nearest neighbour of one point within ``radius``; None if the
        ball is empty. Returns (index, distance)."""
        dist, idx = self._tree.query(np.asarray(point, dtype=np.float64), distance_upper_bound=radius)
        if not np.isfinite(dist):
            return None
        return int(idx), float(dist)

    def query_many(self, points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised radius-bounded nearest neighbour. Misses get index -1
        and distance +inf."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dist, idx = self._tree.query(pts, distance_upper_bound=radius)
        idx = np.where(np.isfinite(dist), idx, -1).astype(np.int64)
        return dist, idx


def nearest_neighbor_index(cloud: PointCloud | np.ndarray) -> NeighborIndex:
    """Build a spatial index for radius-bounded nearest-neighbour queries."""
    return NeighborIndex(cloud)
