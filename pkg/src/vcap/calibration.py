"""Extrinsic calibration from labeled depth views.

Stage one turns each labeled view into sparse side correspondences
(region medians against the known face midpoints) and solves a rigid
alignment per view. Stage two jointly refines all views with
point-to-plane ICP over a pose graph linking ring-adjacent views and
every view to the structure model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    Intrinsics,
    NeighborIndex,
    PointCloud,
    Pose,
    backproject,
    orthonormalize,
)
from .structure import StructureModel, structure_cloud


class CalibrationError(RuntimeError):
    pass


class UnderConstrainedError(CalibrationError):
    """Fewer than three usable correspondences in a view."""


class DegenerateGeometryError(CalibrationError):
    """Correspondences are collinear or otherwise rank-deficient."""


@dataclass(frozen=True, eq=False)
class Correspondence:
    side_id: int
    observed: np.ndarray  # camera frame, metres
    model: np.ndarray  # structure frame, metres
    pixels: int  # region size that produced the observation


def extract_correspondences(
    labels: np.ndarray,
    depth: np.ndarray,
    intrinsics: Intrinsics,
    model: StructureModel,
    min_region_px: int = 50,
) -> list[Correspondence]:
    """Pair each sufficiently large labeled region with its face midpoint.

    The observed point is the coordinate-wise median of the region's
    back-projected pixels, which shrugs off stray mislabeled pixels.
    Raises UnderConstrainedError when fewer than three sides qualify.
    """
    lab = np.asarray(labels)
    d = np.asarray(depth, dtype=np.float64)
    if lab.shape != d.shape:
        raise GeometryError("labels and depth must share a shape")
    cloud = backproject(d, intrinsics)
    if cloud.pixels is None:
        raise GeometryError("backprojection lost pixel provenance")
    point_labels = lab[cloud.pixels[:, 1], cloud.pixels[:, 0]]

    corrs: list[Correspondence] = []
    for side in model.sides:
        sel = point_labels == side.side_id
        count = int(sel.sum())
        if count < min_region_px:
            continue
        observed = np.median(cloud.points[sel], axis=0)
        corrs.append(Correspondence(side.side_id, observed, side.center.copy(), count))
    if len(corrs) < 3:
        raise UnderConstrainedError(
            f"only {len(corrs)} usable side regions (need at least 3)"
        )
    return corrs


def procrustes(correspondences: list[Correspondence]) -> Pose:
    """Least-squares rigid alignment mapping observed (camera-frame)
    points onto their model (structure-frame) counterparts.

    Returns the structure-from-camera pose. Uses the SVD construction
    with the determinant sign fix, so the result is always a proper
    rotation even when the best orthogonal map would be a reflection.
    """
    if len(correspondences) < 3:
        raise UnderConstrainedError("rigid alignment needs at least 3 pairs")
    a = np.array([c.observed for c in correspondences], dtype=np.float64)
    b = np.array([c.model for c in correspondences], dtype=np.float64)
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    # rank < 2 means the pairs span at most a line
    if s[1] < 1e-12 * max(s[0], 1.0):
        raise DegenerateGeometryError("correspondences are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return Pose(r, t)


def trimmed_procrustes(
    correspondences: list[Correspondence],
    rounds: int = 2,
    keep_factor: float = 2.5,
    floor_m: float = 0.03,
) -> tuple[Pose, list[Correspondence]]:
    """Procrustes with outlier trimming.

    Sides that are partially hidden (a box top mostly covered by the box
    above it) yield medians far from the face midpoint; they show up as
    large residuals against the fitted pose and get dropped before a
    refit. Keeps pairs with residual <= max(keep_factor * median, floor).
    """
    pose = procrustes(correspondences)
    kept = list(correspondences)
    for _ in range(rounds):
        residuals = np.array(
            [np.linalg.norm(pose.apply(c.observed) - c.model) for c in kept]
        )
        cutoff = max(keep_factor * float(np.median(residuals)), floor_m)
        sel = residuals <= cutoff
        if sel.all() or sel.sum() < 3:
            break
        kept = [c for c, s in zip(kept, sel) if s]
        try:
            pose = procrustes(kept)
        except CalibrationError:
            return procrustes(correspondences), list(correspondences)
    return pose, kept


@dataclass(frozen=True)
class IcpOptions:
    match_radius_m: float = 0.05
    normal_max_angle_deg: float = 30.0
    step_tolerance: float = 1e-6
    max_iterations: int = 50
    max_points_per_view: int = 4000
    initial_damping: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "match_radius_m": self.match_radius_m,
            "normal_max_angle_deg": self.normal_max_angle_deg,
            "step_tolerance": self.step_tolerance,
            "max_iterations": self.max_iterations,
            "max_points_per_view": self.max_points_per_view,
            "initial_damping": self.initial_damping,
        }

    @staticmethod
    def from_dict(data: dict) -> "IcpOptions":
        return IcpOptions(**{k: data[k] for k in IcpOptions().to_dict() if k in data})


@dataclass
class IcpDiagnostics:
    iterations: int = 0
    converged: bool = False
    rms_history: list[float] = field(default_factory=list)
    matches_last: int = 0


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _exp_rotation(omega: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(omega)
    if angle < 1e-12:
        return np.eye(3) + _skew(omega)
    axis = omega / angle
    k = _skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _apply_increment(pose: Pose, delta: np.ndarray) -> Pose:
    """Left-multiplicative update by (omega, u): the new transform maps
    p to exp(omega) (R p + t) + u."""
    rot = _exp_rotation(delta[:3])
    return Pose(orthonormalize(rot @ pose.rotation), rot @ pose.translation + delta[3:])


def ring_order(poses: list[Pose]) -> list[int]:
    """View indices sorted by azimuth of the camera position around the
    structure's vertical axis."""
    azimuths = [np.arctan2(p.translation[2], p.translation[0]) for p in poses]
    return sorted(range(len(poses)), key=lambda i: azimuths[i])


def graph_icp(
    view_clouds: list[PointCloud],
    model_cloud: PointCloud,
    initial_poses: list[Pose],
    options: IcpOptions = IcpOptions(),
) -> tuple[list[Pose], IcpDiagnostics]:
    """Jointly refine all sensor poses with point-to-plane ICP.

    The pose graph couples each view with its ring neighbours and with
    the structure model; the model is the fixed gauge. Each outer
    iteration rebuilds matches and takes one damped Gauss-Newton step
    over all 6N pose parameters, accepted only if the residual drops.
    """
    n = len(view_clouds)
    if n != len(initial_poses):
        raise CalibrationError("one initial pose per view cloud required")
    if n < 1:
        raise CalibrationError("nothing to refine")
    for cloud in view_clouds + [model_cloud]:
        if cloud.normals is None:
            raise CalibrationError("point-to-plane needs normals on every cloud")
        if len(cloud) == 0:
            raise CalibrationError("empty cloud in the graph")

    views = [c.subsample(options.max_points_per_view) for c in view_clouds]
    model = model_cloud.subsample(4 * options.max_points_per_view)
    trees = [NeighborIndex(c.points) for c in views]
    model_tree = NeighborIndex(model.points)

    order = ring_order(initial_poses)
    edges: list[tuple[int, int]] = []  # (source view, target view) or target -1 = model
    if n > 1:
        for k in range(n):
            i, j = order[k], order[(k + 1) % n]
            if (j, i) not in edges and (i, j) not in edges:
                edges.append((i, j))
    for i in range(n):
        edges.append((i, -1))

    poses = list(initial_poses)
    cos_gate = np.cos(np.radians(options.normal_max_angle_deg))
    diag = IcpDiagnostics()
    damping = options.initial_damping

    def collect(current: list[Pose]):
        """Match all edges under the given poses; returns the stacked
        jacobian pieces and residuals."""
        rows_i, rows_j, residuals, blocks = [], [], [], []
        total_matches = 0
        for (i, j) in edges:
            src = views[i]
            src_struct = current[i].apply(src.points)
            src_nrm_struct = current[i].rotate(src.normals)
            if j >= 0:
                tgt, tree, pose_j = views[j], trees[j], current[j]
                local = pose_j.inverse().apply(src_struct)
            else:
                tgt, tree, pose_j = model, model_tree, None
                local = src_struct
            dist, idx = tree.query_many(local, options.match_radius_m)
            hit = idx >= 0
            if not hit.any():
                continue
            t_pts = tgt.points[idx[hit]]
            t_nrm = tgt.normals[idx[hit]]
            if pose_j is not None:
                q_j = pose_j.apply(t_pts)
                n_t = pose_j.rotate(t_nrm)
            else:
                q_j = t_pts
                n_t = t_nrm
            q_i = src_struct[hit]
            n_s = src_nrm_struct[hit]
            keep = np.einsum("ij,ij->i", n_s, n_t) > cos_gate
            if not keep.any():
                continue
            q_i, q_j, n_t = q_i[keep], q_j[keep], n_t[keep]
            r = np.einsum("ij,ij->i", n_t, q_i - q_j)
            a_i = np.concatenate([np.cross(q_i, n_t), n_t], axis=1)  # (m, 6)
            blocks.append((i, j, a_i, r, q_j))
            total_matches += len(r)
        return blocks, total_matches

    def build_system(blocks):
        h = np.zeros((6 * n, 6 * n))
        g = np.zeros(6 * n)
        sq = 0.0
        count = 0
        for (i, j, a_i, r, q_j) in blocks:
            si = slice(6 * i, 6 * i + 6)
            h[si, si] += a_i.T @ a_i
            g[si] += a_i.T @ r
            if j >= 0:
                n_t = a_i[:, 3:]
                a_j = -np.concatenate([np.cross(q_j, n_t), n_t], axis=1)
                sj = slice(6 * j, 6 * j + 6)
                h[sj, sj] += a_j.T @ a_j
                h[si, sj] += a_i.T @ a_j
                h[sj, si] += a_j.T @ a_i
                g[sj] += a_j.T @ r
            sq += float(r @ r)
            count += len(r)
        return h, g, sq, count

    for it in range(options.max_iterations):
        blocks, matches = collect(poses)
        if matches == 0:
            raise CalibrationError("no ICP matches on any edge; initial poses too far off")
        h, g, sq_before, count = build_system(blocks)
        diag.rms_history.append(float(np.sqrt(sq_before / count)))
        diag.matches_last = matches

        step = None
        lam = damping
        for _ in range(8):
            try:
                delta = np.linalg.solve(h + lam * np.eye(6 * n), -g)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-9)
                continue
            trial = [_apply_increment(poses[i], delta[6 * i : 6 * i + 6]) for i in range(n)]
            trial_blocks, trial_matches = collect(trial)
            if trial_matches:
                _, _, sq_after, count_after = build_system(trial_blocks)
                if sq_after / max(count_after, 1) <= sq_before / count or sq_before == 0.0:
                    step = (trial, delta)
                    damping = max(lam / 3.0, 1e-9)
                    break
            lam = max(lam * 10.0, 1e-9)
        if step is None:
            diag.iterations = it + 1
            break
        poses, delta = step
        diag.iterations = it + 1
        if np.linalg.norm(delta) < options.step_tolerance:
            diag.converged = True
            break

    return poses, diag


def evaluate_rmse(
    poses: list[Pose],
    clouds: list[PointCloud],
    eval_radius_m: float = 0.05,
) -> tuple[float, list[tuple[int, int, float, int]]]:
    """Closest-point RMSE between ring-adjacent views, in millimetres.

    Clouds go into the structure frame under the given poses; for each
    adjacent pair the smaller cloud queries the larger for nearest
    neighbours within ``eval_radius_m``. Returns the mean over pairs and
    the per-pair breakdown (i, j, rmse_mm, matched points). Pairs without
    any match are excluded from the mean and reported with NaN.
    """
    if len(poses) != len(clouds):
        raise CalibrationError("need one pose per cloud")
    n = len(poses)
    if n < 2:
        raise CalibrationError("adjacency RMSE needs at least two views")
    placed = [pose.apply(cloud.points) for pose, cloud in zip(poses, clouds)]
    order = ring_order(poses)
    pairs = []
    for k in range(n):
        i, j = order[k], order[(k + 1) % n]
        if n == 2 and k == 1:
            break
        a, b = placed[i], placed[j]
        small, large = (a, b) if len(a) <= len(b) else (b, a)
        tree = NeighborIndex(large)
        dist, idx = tree.query_many(small, eval_radius_m)
        hit = idx >= 0
        if not hit.any():
            pairs.append((i, j, float("nan"), 0))
            continue
        rmse_mm = float(np.sqrt(np.mean(dist[hit] ** 2)) * 1000.0)
        pairs.append((i, j, rmse_mm, int(hit.sum())))
    valid = [p[2] for p in pairs if p[3] > 0]
    if not valid:
        raise CalibrationError("no adjacent pair had matches within the radius")
    return float(np.mean(valid)), pairs


@dataclass
class ViewReport:
    index: int
    ok: bool
    flagged_by_labeler: bool = False
    correspondences: int = 0
    error: str = ""


@dataclass
class CalibrationResult:
    poses: list[Pose | None]  # structure-from-camera, None where the view failed
    mean_rmse_mm: float
    pair_rmse: list[tuple[int, int, float, int]]
    views: list[ViewReport]
    icp: IcpDiagnostics
    ring: list[int]
    # foreground clouds the joint refinement ran on (camera frame), None
    # where the view failed; kept out of serialization, used by viewers
    clouds: list[PointCloud | None] | None = None


def view_cloud_for_icp(
    depth: np.ndarray,
    refined_labels: np.ndarray,
    predicted_normals: np.ndarray,
    intrinsics: Intrinsics,
) -> PointCloud:
    """Foreground points of one view with the labeler's normals attached.

    Pixels need a valid depth, a non-background refined label and a
    usable predicted normal; normals are renormalised.
    """
    cloud = backproject(np.asarray(depth, dtype=np.float64), intrinsics)
    px = cloud.pixels
    lab = np.asarray(refined_labels)[px[:, 1], px[:, 0]]
    nrm = np.asarray(predicted_normals, dtype=np.float64)[px[:, 1], px[:, 0]]
    length = np.linalg.norm(nrm, axis=1)
    keep = (lab > 0) & (length > 0.5)
    nrm = nrm[keep] / length[keep][:, None]
    return PointCloud(cloud.points[keep], nrm, px[keep])


def calibrate(
    depths: list[np.ndarray],
    intrinsics: Intrinsics,
    model: StructureModel,
    labeler,
    crf_params=None,
    icp_options: IcpOptions = IcpOptions(),
    min_region_px: int = 50,
    model_spacing_m: float = 0.02,
    eval_radius_m: float = 0.05,
    progress=None,
) -> CalibrationResult:
    """Full pipeline: label, refine, correspond, align, jointly refine,
    and score. Views that fail labeling or alignment are dropped with a
    per-view report; fewer than two surviving views is an error.

    ``progress``, when given, is called with a short stage string as the
    pipeline advances (for UIs; exceptions from it are not caught).
    """
    from .crf import CrfParams, crf_refine
    from .labeling import label_views

    if crf_params is None:
        crf_params = CrfParams()
    n = len(depths)
    if n < 2:
        raise CalibrationError("calibration needs at least two views")
    if progress is None:
        progress = lambda stage: None

    progress(f"labeling {n} views")
    outputs = label_views(depths, intrinsics, labeler)
    reports = [ViewReport(i, ok=True) for i in range(n)]

    survivors: list[int] = []
    init_poses: list[Pose] = []
    clouds: list[PointCloud] = []
    for i, (depth, out) in enumerate(zip(depths, outputs)):
        progress(f"aligning view {i + 1}/{n}")
        reports[i].flagged_by_labeler = out.flagged
        if out.flagged:
            reports[i].ok = False
            reports[i].error = out.note or "labeler flagged the view"
            continue
        refined = crf_refine(out.probs, out.normals, crf_params)
        try:
            corrs = extract_correspondences(refined, depth, intrinsics, model, min_region_px)
            pose, kept = trimmed_procrustes(corrs)
            reports[i].correspondences = len(kept)
        except CalibrationError as exc:
            reports[i].ok = False
            reports[i].error = str(exc)
            continue
        cloud = view_cloud_for_icp(depth, refined, out.normals, intrinsics)
        if len(cloud) < 3:
            reports[i].ok = False
            reports[i].error = "no usable foreground points"
            continue
        survivors.append(i)
        init_poses.append(pose)
        clouds.append(cloud)

    if len(survivors) < 2:
        raise CalibrationError(
            f"only {len(survivors)} of {n} views usable; calibration needs two"
        )

    progress("joint refinement")
    model_points = structure_cloud(model, model_spacing_m)
    poses, diag = graph_icp(clouds, model_points, init_poses, icp_options)
    progress("evaluating")
    mean_rmse, pair_rmse = evaluate_rmse(poses, clouds, eval_radius_m)

    full_poses: list[Pose | None] = [None] * n
    full_clouds: list[PointCloud | None] = [None] * n
    for k, i in enumerate(survivors):
        full_poses[i] = poses[k]
        full_clouds[i] = clouds[k]
    # pair indices refer to the survivor list; map them back to view ids
    pair_rmse = [(survivors[a], survivors[b], r, m) for a, b, r, m in pair_rmse]
    ring = [survivors[i] for i in ring_order(poses)]
    return CalibrationResult(full_poses, mean_rmse, pair_rmse, reports, diag, ring, full_clouds)
