"""Sensor placement sampling on a cylinder around the structure.

Sensor n of N gets an azimuth band centred at n * 360/N degrees; height,
radius and per-axis rotational noise come from discrete uniform grids.
Every sampled value lies exactly on its grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import GeometryError, Pose, rot_x, rot_y, rot_z


@dataclass(frozen=True)
class UniformGrid:
    """Closed interval [lower, upper] discretised with the given step."""

    lower: float
    upper: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise GeometryError("grid step must be positive")
        if self.upper < self.lower:
            raise GeometryError("grid upper bound below lower bound")

    @property
    def count(self) -> int:
        return int(np.floor((self.upper - self.lower) / self.step + 1e-9)) + 1

    def points(self) -> np.ndarray:
        return self.lower + self.step * np.arange(self.count)

    def draw(self, rng: np.random.Generator) -> float:
        return float(self.lower + self.step * rng.integers(self.count))

    def shifted(self, offset: float) -> "UniformGrid":
        return UniformGrid(self.lower + offset, self.upper + offset, self.step)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "step": self.step}

    @staticmethod
    def from_dict(data: dict) -> "UniformGrid":
        return UniformGrid(float(data["lower"]), float(data["upper"]), float(data["step"]))


@dataclass(frozen=True)
class SamplingParams:
    """Placement distribution for a rig of ``sensors`` sensors."""

    sensors: int = 4
    azimuth_jitter_deg: UniformGrid = field(default_factory=lambda: UniformGrid(-10.0, 10.0, 2.5))
    height_m: UniformGrid = field(default_factory=lambda: UniformGrid(0.28, 0.70, 0.02))
    radius_m: UniformGrid = field(default_factory=lambda: UniformGrid(1.75, 2.25, 0.02))
    euler_noise_deg: UniformGrid = field(default_factory=lambda: UniformGrid(-10.0, 10.0, 2.5))

    def __post_init__(self):
        if self.sensors < 1:
            raise GeometryError("a rig needs at least one sensor")

    def azimuth_center(self, n: int) -> float:
        if not 1 <= n <= self.sensors:
            raise GeometryError(f"sensor index {n} outside 1..{self.sensors}")
        return n * 360.0 / self.sensors

    def to_dict(self) -> dict:
        return {
            "sensors": self.sensors,
            "azimuth_jitter_deg": self.azimuth_jitter_deg.to_dict(),
            "height_m": self.height_m.to_dict(),
            "radius_m": self.radius_m.to_dict(),
            "euler_noise_deg": self.euler_noise_deg.to_dict(),
        }

    @staticmethod
    def from_dict(data: dict) -> "SamplingParams":
        return SamplingParams(
            sensors=int(data["sensors"]),
            azimuth_jitter_deg=UniformGrid.from_dict(data["azimuth_jitter_deg"]),
            height_m=UniformGrid.from_dict(data["height_m"]),
            radius_m=UniformGrid.from_dict(data["radius_m"]),
            euler_noise_deg=UniformGrid.from_dict(data["euler_noise_deg"]),
        )


@dataclass(frozen=True)
class CylindricalSample:
    """The raw placement draw, kept alongside the pose for bookkeeping."""

    radius_m: float
    azimuth_deg: float
    height_m: float
    euler_deg: tuple[float, float, float]


def look_at_rotation(eye: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-from-world rotation for a camera at ``eye`` looking at
    ``target``; rows are the camera axes (x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise GeometryError("look-at target coincides with the eye")
    z = forward / norm
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    xn = np.linalg.norm(x)
    if xn < 1e-9:
        raise GeometryError("view direction is parallel to the up vector")
    x /= xn
    y = np.cross(z, x)
    return np.stack([x, y, z])


def pose_from_cylindrical(sample: CylindricalSample) -> Pose:
    """Sensor pose (structure-from-camera) for a cylindrical placement.

    The camera sits at (r cos a, h, r sin a), looks at the structure
    origin, then gets the rotational noise applied as premultiplied
    per-axis rotations.
    """
    a = np.radians(sample.azimuth_deg)
    position = np.array(
        [sample.radius_m * np.cos(a), sample.height_m, sample.radius_m * np.sin(a)]
    )
    r_view = look_at_rotation(position, np.zeros(3))
    ex, ey, ez = sample.euler_deg
    r_cam = rot_x(ex) @ rot_y(ey) @ rot_z(ez) @ r_view
    return Pose(r_cam.T, position)


def sample_placement(
    n: int, params: SamplingParams, rng: np.random.Generator
) -> tuple[Pose, CylindricalSample]:
    """Draw sensor n's placement (n runs 1..N)."""
    center = params.azimuth_center(n)
    azimuth = center + params.azimuth_jitter_deg.draw(rng)
    sample = CylindricalSample(
        radius_m=params.radius_m.draw(rng),
        azimuth_deg=azimuth,
        height_m=params.height_m.draw(rng),
        euler_deg=(
            params.euler_noise_deg.draw(rng),
            params.euler_noise_deg.draw(rng),
            params.euler_noise_deg.draw(rng),
        ),
    )
    return pose_from_cylindrical(sample), sample


@dataclass(frozen=True, eq=False)
class RigSensor:
    eye_id: str
    pose: Pose  # structure-from-camera
    sample: CylindricalSample | None = None


def sample_rig(
    params: SamplingParams, rng: np.random.Generator | int | None = None
) -> list[RigSensor]:
    """Draw a whole rig; sensors are named eye1..eyeN."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    sensors = []
    for n in range(1, params.sensors + 1):
        pose, sample = sample_placement(n, params, rng)
        sensors.append(RigSensor(f"eye{n}", pose, sample))
    return sensors


def default_rig(sensors: int = 4, seed: int | None = 0, aimed: bool = False) -> list[RigSensor]:
    """Random rig under the default bounds. ``aimed`` zeroes the mounting
    tilt (pure look-at orientation), which is what grid-search labeling
    assumes; leave it off to stress pose-handling code with tilted
    sensors."""
    params = SamplingParams(sensors=sensors)
    if aimed:
        params = replace(params, euler_noise_deg=UniformGrid(0.0, 0.0, 1.0))
    return sample_rig(params, seed)


def _quat_wxyz(rotation: np.ndarray) -> list[float]:
    q = Rotation.from_matrix(rotation).as_quat()  # x, y, z, w
    wxyz = np.array([q[3], q[0], q[1], q[2]])
    if wxyz[0] < 0:
        wxyz = -wxyz
    return [float(v) for v in wxyz]


def save_rig(path: str | Path, rig: list[RigSensor], params: SamplingParams | None = None) -> None:
    """Write a rig file; include the placement distribution when known so
    downstream search-based labeling can reuse the same bounds."""
    data = {
        "sensors": [
            {
                "eye": s.eye_id,
                "rotation_wxyz": _quat_wxyz(s.pose.rotation),
                "translation": [float(v) for v in s.pose.translation],
                **(
                    {
                        "cylindrical": {
                            "radius_m": s.sample.radius_m,
                            "azimuth_deg": s.sample.azimuth_deg,
                            "height_m": s.sample.height_m,
                            "euler_deg": list(s.sample.euler_deg),
                        }
                    }
                    if s.sample is not None
                    else {}
                ),
            }
            for s in rig
        ]
    }
    if params is not None:
        data["sampling"] = params.to_dict()
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_rig_sampling(path: str | Path) -> SamplingParams | None:
    """The placement distribution stored in a rig file, if any."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GeometryError(f"cannot read rig file {path}: {exc}") from exc
    if "sampling" not in data:
        return None
    return SamplingParams.from_dict(data["sampling"])


def load_rig(path: str | Path) -> list[RigSensor]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GeometryError(f"cannot read rig file {path}: {exc}") from exc
    if not isinstance(data, dict) or "sensors" not in data:
        raise GeometryError(f"{path}: missing 'sensors' entry")
    rig = []
    for entry in data["sensors"]:
        try:
            w, x, y, z = entry["rotation_wxyz"]
            rot = Rotation.from_quat([x, y, z, w]).as_matrix()
            pose = Pose(rot, np.array(entry["translation"], dtype=np.float64))
            sample = None
            if "cylindrical" in entry:
                c = entry["cylindrical"]
                sample = CylindricalSample(
                    radius_m=float(c["radius_m"]),
                    azimuth_deg=float(c["azimuth_deg"]),
                    height_m=float(c["height_m"]),
                    euler_deg=tuple(float(v) for v in c["euler_deg"]),
                )
            rig.append(RigSensor(str(entry["eye"]), pose, sample))
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"{path}: malformed sensor entry: {exc}") from exc
    if not rig:
        raise GeometryError(f"{path}: rig file lists no sensors")
    return rig


def placement_params(
    sensors: int = 4,
    radius_center: float | None = None,
    radius_span: float = 0.1,
    height_low: float | None = None,
    height_high: float | None = None,
    euler_span: float = 10.0,
) -> SamplingParams:
    """Convenience for restricted placement bands (narrow radius ring,
    limited height) used by specific rig layouts."""
    base = SamplingParams(sensors=sensors)
    radius = base.radius_m
    if radius_center is not None:
        radius = UniformGrid(radius_center - radius_span, radius_center + radius_span, base.radius_m.step)
    height = base.height_m
    if height_low is not None:
        height = UniformGrid(height_low, height_high if height_high is not None else height_low, base.height_m.step)
    euler = UniformGrid(-euler_span, euler_span, base.euler_noise_deg.step) if euler_span > 0 else UniformGrid(0.0, 0.0, 1.0)
    return replace(base, sensors=sensors, radius_m=radius, height_m=height, euler_noise_deg=euler)
