"""The calibration structure: a stack of rectangular boxes.

Each box contributes six faces; a face is a "side" with a stable integer
id. Side ids start at 1 (0 is background in label rasters), ordered
box-major with faces in +x, -x, +y, -y, +z, -z order, so the default
four-box structure yields ids 1..24.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GeometryError, Pose, PointCloud, rot_y

FACE_ORDER = ("+x", "-x", "+y", "-y", "+z", "-z")


@dataclass(frozen=True, eq=False)
class BoxSpec:
    """One box: half-extents plus its rigid placement in the structure
    frame (yaw about vertical + position)."""

    half_extents: np.ndarray
    position: np.ndarray
    yaw_deg: float = 0.0

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=np.float64)
        pos = np.asarray(self.position, dtype=np.float64)
        if he.shape != (3,) or pos.shape != (3,):
            raise GeometryError("half_extents and position must be 3-vectors")
        if np.any(he <= 0):
            raise GeometryError("half extents must be positive")
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "position", pos)

    @property
    def pose(self) -> Pose:
        """structure-from-box transform."""
        return Pose(rot_y(self.yaw_deg), self.position)


@dataclass(frozen=True, eq=False)
class Side:
    """One face of one box, resolved into the structure frame."""

    side_id: int
    box_index: int
    face: str  # one of FACE_ORDER
    normal: np.ndarray  # outward unit normal
    center: np.ndarray
    u_dir: np.ndarray  # in-plane axes spanning the rectangle
    v_dir: np.ndarray
    extents: tuple[float, float]  # half sizes along u_dir / v_dir

    def corners(self) -> np.ndarray:
        """Four corners, counter-clockwise when viewed from outside."""
        eu, ev = self.extents
        u, v = self.u_dir, self.v_dir
        return np.array(
            [
                self.center + eu * u + ev * v,
                self.center - eu * u + ev * v,
                self.center - eu * u - ev * v,
                self.center + eu * u - ev * v,
            ]
        )


# For each face: (axis, sign, in-plane axes). The in-plane axes are chosen
# so that (u_dir x v_dir) points along the outward normal.
_FACE_BASIS = {
    "+x": (0, 1, 1, 2),
    "-x": (0, -1, 2, 1),
    "+y": (1, 1, 2, 0),
    "-y": (1, -1, 0, 2),
    "+z": (2, 1, 0, 1),
    "-z": (2, -1, 1, 0),
}


@dataclass(frozen=True, eq=False)
class StructureModel:
    boxes: tuple[BoxSpec, ...]
    sides: tuple[Side, ...]

    def side_by_id(self, side_id: int) -> Side:
        if not 1 <= side_id <= len(self.sides):
            raise GeometryError(f"side id {side_id} out of range")
        return self.sides[side_id - 1]

    def bounding_radius(self) -> float:
        """Radius of the origin-centred sphere containing every corner."""
        corners = np.concatenate([s.corners() for s in self.sides])
        return float(np.linalg.norm(corners, axis=1).max())


def assemble(boxes: list[BoxSpec] | tuple[BoxSpec, ...]) -> StructureModel:
    """Resolve boxes into the flat side table."""
    if len(boxes) == 0:
        raise GeometryError("a structure needs at least one box")
    sides: list[Side] = []
    axes = np.eye(3)
    for bi, box in enumerate(boxes):
        pose = box.pose
        for fi, face in enumerate(FACE_ORDER):
            axis, sign, ui, vi = _FACE_BASIS[face]
            normal = pose.rotate(sign * axes[axis])
            center = pose.apply(sign * box.half_extents[axis] * axes[axis])
            u_dir = pose.rotate(axes[ui])
            v_dir = pose.rotate(axes[vi])
            # keep u x v aligned with the outward normal
            if np.dot(np.cross(u_dir, v_dir), normal) < 0:
                u_dir = -u_dir
            sides.append(
                Side(
                    side_id=bi * 6 + fi + 1,
                    box_index=bi,
                    face=face,
                    normal=normal,
                    center=center,
                    u_dir=u_dir,
                    v_dir=v_dir,
                    extents=(float(box.half_extents[ui]), float(box.half_extents[vi])),
                )
            )
    return StructureModel(tuple(boxes), tuple(sides))


# Default structure: four 0.60 x 0.40 x 0.40 m boxes stacked along y with
# distinct yaws and lateral offsets. Yaws differ pairwise modulo 90 degrees
# and every offset is non-zero, so no two sides are coplanar and no yaw of
# 90/180/270 degrees maps the structure onto itself.
_DEFAULT_BOXES = (
    ((0.30, 0.20, 0.20), (0.05, -0.60, 0.03), 0.0),
    ((0.30, 0.20, 0.20), (-0.06, -0.20, 0.05), 35.0),
    ((0.30, 0.20, 0.20), (0.04, 0.20, -0.06), 70.0),
    ((0.30, 0.20, 0.20), (-0.03, 0.60, -0.04), 110.0),
)


def default_structure() -> StructureModel:
    return assemble([BoxSpec(np.array(he), np.array(pos), yaw) for he, pos, yaw in _DEFAULT_BOXES])


def structure_to_dict(model: StructureModel) -> dict:
    return {
        "boxes": [
            {
                "half_extents": [float(x) for x in b.half_extents],
                "position": [float(x) for x in b.position],
                "yaw_deg": float(b.yaw_deg),
            }
            for b in model.boxes
        ]
    }


def structure_from_dict(data: dict) -> StructureModel:
    if not isinstance(data, dict) or "boxes" not in data:
        raise GeometryError("structure description is missing a 'boxes' entry")
    boxes = []
    for entry in data["boxes"]:
        try:
            boxes.append(
                BoxSpec(
                    np.array(entry["half_extents"], dtype=np.float64),
                    np.array(entry["position"], dtype=np.float64),
                    float(entry["yaw_deg"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"bad box entry {entry!r}: {exc}") from exc
    return assemble(boxes)


def save_structure(path: str | Path, model: StructureModel) -> None:
    Path(path).write_text(json.dumps(structure_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_structure(path: str | Path) -> StructureModel:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GeometryError(f"cannot read structure file {path}: {exc}") from exc
    try:
        return structure_from_dict(data)
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from exc


def structure_cloud(model: StructureModel, spacing: float = 0.02) -> PointCloud:
    """Sample every side on a regular grid. Points lie exactly on the
    faces and carry the face normal."""
    if spacing <= 0:
        raise GeometryError("spacing must be positive")
    pts = []
    nrms = []
    for side in model.sides:
        eu, ev = side.extents
        nu = max(2, int(np.floor(2 * eu / spacing)) + 1)
        nv = max(2, int(np.floor(2 * ev / spacing)) + 1)
        us = np.linspace(-eu, eu, nu)
        vs = np.linspace(-ev, ev, nv)
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        p = (
            side.center[None, :]
            + uu.reshape(-1, 1) * side.u_dir[None, :]
            + vv.reshape(-1, 1) * side.v_dir[None, :]
        )
        pts.append(p)
        nrms.append(np.tile(side.normal, (len(p), 1)))
    return PointCloud(np.concatenate(pts), np.concatenate(nrms))


def camera_inside_box(model: StructureModel, position: np.ndarray) -> bool:
    """True when the given structure-frame position lies inside any box."""
    p = np.asarray(position, dtype=np.float64)
    for box in model.boxes:
        local = box.pose.inverse().apply(p)
        if np.all(np.abs(local) <= box.half_extents + 1e-12):
            return True
    return False
