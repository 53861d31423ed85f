"""Software z-buffer renderer for the box structure.

Faces are split into two triangles, back faces culled, triangles crossing
the near plane clipped, and depth evaluated per pixel by intersecting the
pixel ray with the face plane. That keeps rendered points exactly on the
face planes, which the rest of the pipeline relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import DEFAULT_INTRINSICS, Intrinsics, MAX_DEPTH_M, Pose
from .structure import StructureModel, camera_inside_box

_NEAR = 1e-3  # metres


class RenderedView(NamedTuple):
    depth: np.ndarray  # (H, W) float64 metres, 0 invalid
    normal: np.ndarray  # (H, W, 3) float64, camera frame, zero where invalid
    label: np.ndarray  # (H, W) uint8 side ids, 0 background


@dataclass
class RenderStats:
    """Quality counters; degenerate viewpoints show up here instead of
    raising."""

    near_clipped_triangles: int = 0
    camera_inside_boxes: int = 0
    skipped_triangles: int = 0


def _clip_near(tri: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against
    z = _NEAR. Returns 0..2 triangles."""
    inside = tri[:, 2] > _NEAR
    if inside.all():
        return [tri]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        ain, bin_ = inside[i], inside[(i + 1) % 3]
        if ain:
            poly.append(a)
        if ain != bin_:
            t = (_NEAR - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    tris = []
    for i in range(1, len(poly) - 1):
        tris.append(np.array([poly[0], poly[i], poly[i + 1]]))
    return tris


def _rasterize(
    tri: np.ndarray,
    normal: np.ndarray,
    plane_c: float,
    side_id: int,
    intrinsics: Intrinsics,
    depth: np.ndarray,
    normals: np.ndarray,
    labels: np.ndarray,
    stats: RenderStats,
) -> None:
    k = intrinsics
    z = tri[:, 2]
    u = k.fx * tri[:, 0] / z + k.cx
    v = k.fy * tri[:, 1] / z + k.cy
    u0 = max(0, int(np.ceil(u.min())))
    u1 = min(k.width - 1, int(np.floor(u.max())))
    v0 = max(0, int(np.ceil(v.min())))
    v1 = min(k.height - 1, int(np.floor(v.max())))
    if u0 > u1 or v0 > v1:
        return
    area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
    if abs(area) < 1e-12:
        stats.skipped_triangles += 1
        return
    us = np.arange(u0, u1 + 1, dtype=np.float64)
    vs = np.arange(v0, v1 + 1, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    w0 = (u[2] - u[1]) * (vv - v[1]) - (v[2] - v[1]) * (uu - u[1])
    w1 = (u[0] - u[2]) * (vv - v[2]) - (v[0] - v[2]) * (uu - u[2])
    w2 = (u[1] - u[0]) * (vv - v[0]) - (v[1] - v[0]) * (uu - u[0])
    if area > 0:
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    else:
        inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
    if not inside.any():
        return
    # ray through each pixel centre is ((u-cx)/fx, (v-cy)/fy, 1); depth is
    # where it meets the face plane n.p = c
    denom = (
        normal[0] * (uu - k.cx) / k.fx
        + normal[1] * (vv - k.cy) / k.fy
        + normal[2]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        zhit = plane_c / denom
    ok = inside & np.isfinite(zhit) & (zhit > _NEAR) & (zhit <= MAX_DEPTH_M)
    if not ok.any():
        return
    window = depth[v0 : v1 + 1, u0 : u1 + 1]
    closer = ok & ((window == 0) | (zhit < window))
    if not closer.any():
        return
    window[closer] = zhit[closer]
    labels[v0 : v1 + 1, u0 : u1 + 1][closer] = side_id
    normals[v0 : v1 + 1, u0 : u1 + 1][closer] = normal


def render(
    model: StructureModel,
    cam_from_structure: Pose,
    intrinsics: Intrinsics,
    stats: RenderStats | None = None,
) -> RenderedView:
    """Render depth, camera-frame normals and side labels for one view.

    ``cam_from_structure`` maps structure-frame points into the camera
    frame; sensor rig poses are the inverse of this.
    """
    k = intrinsics
    depth = np.zeros((k.height, k.width), dtype=np.float64)
    normals = np.zeros((k.height, k.width, 3), dtype=np.float64)
    labels = np.zeros((k.height, k.width), dtype=np.uint8)
    if stats is None:
        stats = RenderStats()
    cam_pos = cam_from_structure.inverse().translation
    if camera_inside_box(model, cam_pos):
        stats.camera_inside_boxes += 1
    for side in model.sides:
        corners = cam_from_structure.apply(side.corners())
        n_cam = cam_from_structure.rotate(side.normal)
        plane_c = float(n_cam @ corners[0])
        if plane_c >= -1e-12:
            continue  # back-facing or edge-on
        for tri_idx in ((0, 1, 2), (0, 2, 3)):
            tri = corners[list(tri_idx)]
            if np.all(tri[:, 2] > _NEAR):
                pieces = [tri]
            else:
                pieces = _clip_near(tri)
                stats.near_clipped_triangles += 1
            for piece in pieces:
                _rasterize(piece, n_cam, plane_c, side.side_id, k, depth, normals, labels, stats)
    return RenderedView(depth, normals, labels)


def render_pair(
    model: StructureModel,
    cam_from_structure: Pose,
    intrinsics: Intrinsics = DEFAULT_INTRINSICS,
    stats: RenderStats | None = None,
) -> RenderedView:
    """Render a supervision sample (depth + label, with normals) at the
    default sensor resolution."""
    return render(model, cam_from_structure, intrinsics, stats)
