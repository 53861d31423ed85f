"""Serialization of calibration results and rig poses to JSON, plus a
plain-text RMSE table. One file format, consumed by the CLI, the
orchestrator API and the control panel.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .calibration import CalibrationResult, IcpDiagnostics, ViewReport
from .geometry import Pose

RESULT_FORMAT = "vcap-calibration"
RESULT_VERSION = 1


def pose_to_dict(pose: Pose) -> dict:
    q = Rotation.from_matrix(pose.rotation).as_quat()  # x, y, z, w
    if q[3] < 0:
        q = -q
    return {
        "rotation_wxyz": [float(q[3]), float(q[0]), float(q[1]), float(q[2])],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_dict(data: dict) -> Pose:
    w, x, y, z = data["rotation_wxyz"]
    rot = Rotation.from_quat([x, y, z, w]).as_matrix()
    return Pose(rot, np.asarray(data["translation"], dtype=np.float64))


def result_to_dict(result: CalibrationResult, eye_ids: list[str], config: dict | None = None) -> dict:
    """JSON-ready view of a calibration run. ``eye_ids`` gives the view
    order the run used; ``config`` is stored verbatim so the run can be
    reproduced."""
    if len(eye_ids) != len(result.poses):
        raise ValueError("eye id list does not match the number of views")
    eyes = []
    for view, pose, eye_id in zip(result.views, result.poses, eye_ids):
        eyes.append(
            {
                "id": eye_id,
                "ok": view.ok,
                "flagged": view.flagged_by_labeler,
                "correspondences": view.correspondences,
                "error": view.error,
                "pose": pose_to_dict(pose) if pose is not None else None,
            }
        )
    mean = result.mean_rmse_mm
    return {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "eyes": eyes,
        "mean_rmse_mm": None if math.isnan(mean) else float(mean),
        "pairs": [
            {
                "a": eye_ids[a],
                "b": eye_ids[b],
                "rmse_mm": None if math.isnan(r) else float(r),
                "matches": int(m),
            }
            for a, b, r, m in result.pair_rmse
        ],
        "ring": [eye_ids[i] for i in result.ring],
        "icp": {
            "iterations": result.icp.iterations,
            "converged": result.icp.converged,
            "matches_last": result.icp.matches_last,
            "rms_history": [float(v) for v in result.icp.rms_history],
        },
        "config": config or {},
    }


def result_from_dict(data: dict) -> tuple[CalibrationResult, list[str], dict]:
    if data.get("format") != RESULT_FORMAT:
        raise ValueError("not a calibration result file")
    if data.get("version") != RESULT_VERSION:
        raise ValueError(f"unsupported result version {data.get('version')!r}")
    eye_ids = [e["id"] for e in data["eyes"]]
    order = {eye_id: i for i, eye_id in enumerate(eye_ids)}
    views = []
    poses: list[Pose | None] = []
    for i, entry in enumerate(data["eyes"]):
        views.append(
            ViewReport(
                index=i,
                ok=entry["ok"],
                flagged_by_labeler=entry["flagged"],
                correspondences=entry["correspondences"],
                error=entry["error"],
            )
        )
        poses.append(pose_from_dict(entry["pose"]) if entry["pose"] is not None else None)
    pairs = [
        (
            order[p["a"]],
            order[p["b"]],
            math.nan if p["rmse_mm"] is None else float(p["rmse_mm"]),
            int(p["matches"]),
        )
        for p in data["pairs"]
    ]
    icp = data["icp"]
    result = CalibrationResult(
        poses=poses,
        mean_rmse_mm=math.nan if data["mean_rmse_mm"] is None else float(data["mean_rmse_mm"]),
        pair_rmse=pairs,
        views=views,
        icp=IcpDiagnostics(
            iterations=icp["iterations"],
            converged=icp["converged"],
            rms_history=list(icp["rms_history"]),
            matches_last=icp["matches_last"],
        ),
        ring=[order[eye_id] for eye_id in data["ring"]],
    )
    return result, eye_ids, data.get("config", {})


def save_result(path: str | Path, result: CalibrationResult, eye_ids: list[str], config: dict | None = None) -> None:
    Path(path).write_text(json.dumps(result_to_dict(result, eye_ids, config), indent=2) + "\n")


def load_result(path: str | Path) -> tuple[CalibrationResult, list[str], dict]:
    return result_from_dict(json.loads(Path(path).read_text()))


def rmse_table(result: CalibrationResult, eye_ids: list[str]) -> str:
    """Human-readable adjacent-pair RMSE table with the mean on the last
    row, mirroring how registration quality is usually reported."""
    lines = [f"{'pair':<18}{'rmse (mm)':>12}{'matches':>10}"]
    for a, b, rmse, matches in result.pair_rmse:
        shown = "n/a" if math.isnan(rmse) else f"{rmse:.2f}"
        lines.append(f"{eye_ids[a]} - {eye_ids[b]:<11}{shown:>12}{matches:>10}")
    mean = result.mean_rmse_mm
    shown = "n/a" if math.isnan(mean) else f"{mean:.2f}"
    lines.append(f"{'mean':<18}{shown:>12}")
    return "\n".join(lines)
