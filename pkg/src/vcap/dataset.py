"""On-disk sample groups for training and offline calibration runs.

Layout, one group per rig draw::

    out/
      rig_000/
        rig.json            poses + placement distribution (ground truth)
        meta.json           intrinsics, noise settings, structure, seed
        eye1/
          depth.pgm         corrupted depth, millimetre 16-bit
          label.pgm         true side labels, 8-bit
          normal.npy        true normals, float32 HxWx3
          pose.json         this eye's ground-truth pose
        eye2/ ...
      rig_001/ ...

Writers are deterministic: the same seed produces byte-identical trees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GeometryError, Intrinsics
from .noise import NoiseParams, corrupt
from .render import RenderedView, render
from .sampling import RigSensor, SamplingParams, load_rig, load_rig_sampling, sample_rig, save_rig
from .structure import StructureModel, default_structure, structure_from_dict, structure_to_dict
from .rasters import read_depth_pgm, read_label_pgm, write_depth_pgm, write_label_pgm

GROUP_PREFIX = "rig_"


class DatasetError(RuntimeError):
    pass


def _pose_entry(sensor: RigSensor) -> dict:
    from .reporting import pose_to_dict

    entry = {"eye": sensor.eye_id, **pose_to_dict(sensor.pose)}
    if sensor.sample is not None:
        entry["cylindrical"] = {
            "radius_m": sensor.sample.radius_m,
            "azimuth_deg": sensor.sample.azimuth_deg,
            "height_m": sensor.sample.height_m,
            "euler_deg": list(sensor.sample.euler_deg),
        }
    return entry


def generate_dataset(
    out_dir: str | Path,
    count: int,
    params: SamplingParams,
    intrinsics: Intrinsics,
    noise: NoiseParams,
    seed: int | None = 0,
    model: StructureModel | None = None,
    progress=None,
) -> list[Path]:
    """Render ``count`` rig groups under ``out_dir``; returns group dirs."""
    if count < 1:
        raise DatasetError("dataset needs at least one group")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model or default_structure()
    rng = np.random.default_rng(seed)
    groups = []
    for g in range(count):
        if progress is not None:
            progress(f"group {g + 1}/{count}")
        rig = sample_rig(params, rng)
        group_dir = out_dir / f"{GROUP_PREFIX}{g:03d}"
        group_dir.mkdir(exist_ok=True)
        for sensor in rig:
            view = render(model, sensor.pose.inverse(), intrinsics)
            corrupted = corrupt(view.depth, view.label, noise, rng)
            eye_dir = group_dir / sensor.eye_id
            eye_dir.mkdir(exist_ok=True)
            write_depth_pgm(eye_dir / "depth.pgm", corrupted)
            write_label_pgm(eye_dir / "label.pgm", view.label)
            np.save(eye_dir / "normal.npy", view.normal.astype(np.float32))
            (eye_dir / "pose.json").write_text(
                json.dumps(_pose_entry(sensor), indent=2, sort_keys=True) + "\n"
            )
        save_rig(group_dir / "rig.json", rig, params)
        meta = {
            "group": g,
            "seed": seed,
            "intrinsics": intrinsics.to_dict(),
            "noise": noise.to_dict(),
            "structure": structure_to_dict(model),
        }
        (group_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        groups.append(group_dir)
    return groups


@dataclass
class DatasetGroup:
    """One rig group loaded back from disk."""

    directory: Path
    rig: list[RigSensor]
    sampling: SamplingParams | None
    intrinsics: Intrinsics
    structure: StructureModel
    noise: dict
    depths: list[np.ndarray]
    labels: list[np.ndarray]
    normals: list[np.ndarray]

    @property
    def eye_ids(self) -> list[str]:
        return [s.eye_id for s in self.rig]

    def truth_views(self) -> list[RenderedView]:
        """Ground-truth views for the oracle labeler (corrupted depth is
        carried along but the oracle never reads it)."""
        return [
            RenderedView(depth, normal.astype(np.float64), label)
            for depth, normal, label in zip(self.depths, self.normals, self.labels)
        ]


def load_group(directory: str | Path) -> DatasetGroup:
    directory = Path(directory)
    rig_path = directory / "rig.json"
    meta_path = directory / "meta.json"
    if not rig_path.is_file() or not meta_path.is_file():
        raise DatasetError(f"{directory} is not a dataset group (rig.json/meta.json missing)")
    try:
        rig = load_rig(rig_path)
        sampling = load_rig_sampling(rig_path)
    except GeometryError as exc:
        raise DatasetError(str(exc)) from exc
    try:
        meta = json.loads(meta_path.read_text())
        intrinsics = Intrinsics.from_dict(meta["intrinsics"])
        structure = structure_from_dict(meta["structure"])
    except (json.JSONDecodeError, KeyError, GeometryError) as exc:
        raise DatasetError(f"{meta_path}: {exc}") from exc

    depths, labels, normals = [], [], []
    for sensor in rig:
        eye_dir = directory / sensor.eye_id
        try:
            depths.append(read_depth_pgm(eye_dir / "depth.pgm"))
            labels.append(read_label_pgm(eye_dir / "label.pgm"))
            normals.append(np.load(eye_dir / "normal.npy"))
        except (OSError, ValueError, GeometryError) as exc:
            raise DatasetError(f"cannot load view {sensor.eye_id}: {exc}") from exc
        if normals[-1].shape != (*depths[-1].shape, 3):
            raise DatasetError(f"{sensor.eye_id}: normal raster shape mismatch")
    return DatasetGroup(
        directory=directory,
        rig=rig,
        sampling=sampling,
        intrinsics=intrinsics,
        structure=structure,
        noise=meta.get("noise", {}),
        depths=depths,
        labels=labels,
        normals=normals,
    )


def list_groups(out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise DatasetError(f"{out_dir} is not a dataset directory")
    return sorted(p for p in out_dir.iterdir() if p.is_dir() and p.name.startswith(GROUP_PREFIX))
