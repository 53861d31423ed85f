"""Per-pixel side labeling of depth views, plus the losses and the mIoU
metric used to judge label quality.

Two labelers ship here. ``OracleLabeler`` replays ground-truth labels with
controllable degradation and stands in for a learned segmenter in tests.
``GridSearchLabeler`` is self-supervised: it renders placement-grid pose
candidates, scores them by depth agreement against the observed raster,
and transfers labels and normals from the best-scoring render.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .geometry import GeometryError, Intrinsics, NUM_CLASSES, validate_depth
from .render import RenderedView, render
from .sampling import CylindricalSample, SamplingParams, pose_from_cylindrical
from .structure import StructureModel


class LabelingError(RuntimeError):
    pass


@dataclass(eq=False)
class LabelerOutput:
    """Per-view labeling result: class probabilities, predicted normals,
    and a flag for views the labeler could not place."""

    probs: np.ndarray  # (H, W, C) float32
    normals: np.ndarray  # (H, W, 3) float64
    flagged: bool = False
    note: str = ""

    @property
    def labels(self) -> np.ndarray:
        return self.probs.argmax(axis=2).astype(np.uint8)


class Labeler(Protocol):
    def label(self, depths: Sequence[np.ndarray], intrinsics: Intrinsics) -> list[LabelerOutput]:
        ...


def smoothed_onehot(labels: np.ndarray, classes: int = NUM_CLASSES, alpha: float = 0.05) -> np.ndarray:
    """Label-smoothed one-hot probabilities: the true class gets
    1 - alpha + alpha/C, everything else alpha/C."""
    lab = np.asarray(labels)
    if lab.max(initial=0) >= classes:
        raise LabelingError("label id outside class range")
    probs = np.full(lab.shape + (classes,), alpha / classes, dtype=np.float32)
    h, w = lab.shape
    probs[np.arange(h)[:, None], np.arange(w)[None, :], lab] += 1.0 - alpha
    return probs


def label_views(
    depths: Sequence[np.ndarray], intrinsics: Intrinsics, labeler: Labeler
) -> list[LabelerOutput]:
    """Run a labeler over a group of views, enforcing its contract:
    one output per input, same order, same resolution."""
    if len(depths) == 0:
        raise LabelingError("no views to label")
    for d in depths:
        arr = np.asarray(d)
        if arr.shape != intrinsics.shape:
            raise LabelingError(
                f"view shape {arr.shape} does not match intrinsics {intrinsics.shape}"
            )
    outputs = labeler.label(depths, intrinsics)
    if len(outputs) != len(depths):
        raise LabelingError(
            f"labeler returned {len(outputs)} outputs for {len(depths)} views"
        )
    for out in outputs:
        if out.probs.shape[:2] != intrinsics.shape:
            raise LabelingError("labeler output resolution mismatch")
    return outputs


@dataclass(eq=False)
class OracleLabeler:
    """Test stand-in that knows the true labels and normals.

    ``smoothing`` softens the one-hot probabilities; ``flip_fraction``
    reassigns that fraction of pixels to uniformly random labels.
    """

    truths: Sequence[RenderedView]
    smoothing: float = 0.05
    flip_fraction: float = 0.0
    seed: int = 0
    classes: int = NUM_CLASSES

    def label(self, depths: Sequence[np.ndarray], intrinsics: Intrinsics) -> list[LabelerOutput]:
        if len(depths) != len(self.truths):
            raise LabelingError(
                f"oracle holds {len(self.truths)} views, got {len(depths)}"
            )
        rng = np.random.default_rng(self.seed)
        outputs = []
        for truth in self.truths:
            labels = truth.label.copy()
            if self.flip_fraction > 0:
                flat = labels.ravel()
                count = int(round(self.flip_fraction * flat.size))
                idx = rng.choice(flat.size, size=count, replace=False)
                flat[idx] = rng.integers(0, self.classes, size=count)
            probs = smoothed_onehot(labels, self.classes, self.smoothing)
            outputs.append(LabelerOutput(probs, truth.normal.copy()))
        return outputs


@dataclass(frozen=True)
class GridSearchConfig:
    agreement_tol_m: float = 0.025
    score_height: int = 45
    min_score: float = 0.25
    smoothing: float = 0.05
    refine_rounds: int = 2
    input_margin_m: float = 0.3

    def to_dict(self) -> dict:
        return {
            "agreement_tol_m": self.agreement_tol_m,
            "score_height": self.score_height,
            "min_score": self.min_score,
            "smoothing": self.smoothing,
            "refine_rounds": self.refine_rounds,
            "input_margin_m": self.input_margin_m,
        }

    @staticmethod
    def from_dict(data: dict) -> "GridSearchConfig":
        return GridSearchConfig(**{k: data[k] for k in GridSearchConfig().to_dict() if k in data})


def _depth_mm(depth: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(depth) * 1000.0), 0, 65535).astype(np.uint16)


@dataclass(eq=False)
class GridSearchLabeler:
    """Marker-less labeler: exhaustive search over the placement grid of
    the view's azimuth band, followed by a coordinate pattern search at
    half-step offsets. The winning pose's render supplies labels and
    normals; views whose best score stays under ``min_score`` come back
    flagged as all-background.

    Candidates are rendered with pure look-at orientation, so the search
    covers position only. Sensors mounted with a deliberate off-axis
    tilt of more than a few degrees fall outside this labeler's
    contract and get flagged; use the oracle labeler for such rigs.
    """

    model: StructureModel
    params: SamplingParams
    config: GridSearchConfig = field(default_factory=GridSearchConfig)
    classes: int = NUM_CLASSES

    def __post_init__(self):
        self._cache: dict = {}

    # -- candidate machinery -------------------------------------------------

    def _score_intrinsics(self, intrinsics: Intrinsics) -> tuple[int, Intrinsics]:
        stride = max(1, round(intrinsics.height / self.config.score_height))
        return stride, intrinsics.scaled(stride)

    def _band_candidates(self, band: int) -> np.ndarray:
        center = self.params.azimuth_center(band)
        phis = center + self.params.azimuth_jitter_deg.points()
        heights = self.params.height_m.points()
        radii = self.params.radius_m.points()
        combos = [
            (phi, h, rho)
            for phi in phis
            for h in heights
            for rho in radii
        ]
        return np.array(combos, dtype=np.float64)

    def _render_mm(self, placement: np.ndarray, k: Intrinsics) -> np.ndarray:
        phi, h, rho = placement
        pose = pose_from_cylindrical(CylindricalSample(rho, phi, h, (0.0, 0.0, 0.0)))
        view = render(self.model, pose.inverse(), k)
        return _depth_mm(view.depth)

    def _band_stack(self, band: int, k: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        key = (band, k)
        if key not in self._cache:
            cands = self._band_candidates(band)
            stack = np.stack([self._render_mm(c, k).ravel() for c in cands])
            self._cache[key] = (cands, stack, stack.max(axis=1))
        return self._cache[key]

    # -- scoring --------------------------------------------------------------

    def _score_many(self, stack: np.ndarray, cand_max: np.ndarray, inp: np.ndarray) -> np.ndarray:
        tol = int(round(self.config.agreement_tol_m * 1000))
        margin = int(round(self.config.input_margin_m * 1000))
        inp32 = inp.astype(np.int32)
        inp_valid = inp32 > 0
        scores = np.empty(len(stack), dtype=np.float64)
        chunk = 512
        for lo in range(0, len(stack), chunk):
            hi = min(lo + chunk, len(stack))
            cand = stack[lo:hi].astype(np.int32)
            rv = cand > 0
            cutoff = cand_max[lo:hi].astype(np.int32)[:, None] + margin
            iv = inp_valid[None, :] & (inp32[None, :] <= cutoff)
            agree = rv & iv & (np.abs(cand - inp32[None, :]) < tol)
            union = (rv | iv).sum(axis=1)
            scores[lo:hi] = agree.sum(axis=1) / np.maximum(union, 1)
        return scores

    def _score_one(self, cand_mm: np.ndarray, inp: np.ndarray) -> float:
        flat = cand_mm.ravel()
        return float(
            self._score_many(flat[None, :], np.array([flat.max()]), inp)[0]
        )

    # -- labeling -------------------------------------------------------------

    def _refine(
        self, placement: np.ndarray, score: float, inp: np.ndarray, k: Intrinsics
    ) -> tuple[np.ndarray, float]:
        steps = np.array(
            [
                self.params.azimuth_jitter_deg.step,
                self.params.height_m.step,
                self.params.radius_m.step,
            ]
        )
        best, best_score = placement.copy(), score
        for round_idx in range(1, self.config.refine_rounds + 1):
            scale = 0.5**round_idx
            improved = best.copy()
            for offs in itertools.product((-1.0, 0.0, 1.0), repeat=3):
                if offs == (0.0, 0.0, 0.0):
                    continue
                cand = best + np.array(offs) * steps * scale
                s = self._score_one(self._render_mm(cand, k), inp)
                if s > best_score:
                    best_score = s
                    improved = cand
            best = improved
        return best, best_score

    def _label_one(self, depth: np.ndarray, intrinsics: Intrinsics, band: int) -> LabelerOutput:
        stride, k_score = self._score_intrinsics(intrinsics)
        inp = _depth_mm(np.asarray(depth)[::stride, ::stride]).ravel()
        cands, stack, cand_max = self._band_stack(band, k_score)
        scores = self._score_many(stack, cand_max, inp)
        best_idx = int(np.argmax(scores))
        placement, score = self._refine(cands[best_idx], float(scores[best_idx]), inp, k_score)

        h, w = intrinsics.shape
        if score < self.config.min_score:
            return LabelerOutput(
                probs=smoothed_onehot(np.zeros((h, w), dtype=np.uint8), self.classes, self.config.smoothing),
                normals=np.zeros((h, w, 3)),
                flagged=True,
                note=f"best candidate score {score:.3f} below {self.config.min_score}",
            )
        phi, hgt, rho = placement
        pose = pose_from_cylindrical(CylindricalSample(rho, phi, hgt, (0.0, 0.0, 0.0)))
        view = render(self.model, pose.inverse(), intrinsics)
        return LabelerOutput(
            probs=smoothed_onehot(view.label, self.classes, self.config.smoothing),
            normals=view.normal,
            note=f"score {score:.3f}",
        )

    def label(self, depths: Sequence[np.ndarray], intrinsics: Intrinsics) -> list[LabelerOutput]:
        if len(depths) != self.params.sensors:
            raise LabelingError(
                f"labeler is configured for {self.params.sensors} views, got {len(depths)}"
            )
        outputs = []
        for band, depth in enumerate(depths, start=1):
            try:
                outputs.append(self._label_one(np.asarray(depth, dtype=np.float64), intrinsics, band))
            except (GeometryError, LabelingError) as exc:
                h, w = intrinsics.shape
                outputs.append(
                    LabelerOutput(
                        probs=smoothed_onehot(np.zeros((h, w), dtype=np.uint8), self.classes, self.config.smoothing),
                        normals=np.zeros((h, w, 3)),
                        flagged=True,
                        note=f"labeling failed: {exc}",
                    )
                )
        return outputs


# -- metrics and losses --------------------------------------------------


def miou(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Mean intersection-over-union over the classes present in truth."""
    pred = np.asarray(predicted)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise LabelingError("prediction and truth shapes differ")
    ious = []
    for cls in np.unique(true):
        p = pred == cls
        t = true == cls
        union = np.logical_or(p, t).sum()
        inter = np.logical_and(p, t).sum()
        ious.append(inter / union if union else 1.0)
    return float(np.mean(ious))


@dataclass(frozen=True)
class LossParams:
    semantic_weight: float = 0.1


@dataclass(frozen=True)
class LossBreakdown:
    overall: float
    normal: float
    semantic: float


def view_loss(
    probs: np.ndarray,
    pred_normals: np.ndarray,
    true_labels: np.ndarray,
    true_normals: np.ndarray,
    params: LossParams = LossParams(),
) -> LossBreakdown:
    """Per-view loss: mean squared normal error plus weighted per-pixel
    cross entropy against the true labels."""
    p = np.asarray(probs, dtype=np.float64)
    lab = np.asarray(true_labels)
    h, w = lab.shape
    if p.shape[:2] != (h, w):
        raise LabelingError("probability raster does not match labels")
    pn = np.asarray(pred_normals, dtype=np.float64)
    tn = np.asarray(true_normals, dtype=np.float64)
    if pn.shape != (h, w, 3) or tn.shape != (h, w, 3):
        raise LabelingError("normal rasters must be (H, W, 3)")

    picked = p[np.arange(h)[:, None], np.arange(w)[None, :], lab]
    semantic = float(-np.mean(np.log(np.clip(picked, 1e-300, None))))
    normal = float(np.mean(np.sum((pn - tn) ** 2, axis=2)))
    return LossBreakdown(normal + params.semantic_weight * semantic, normal, semantic)


def loss_overall(
    prob_maps: Sequence[np.ndarray] | np.ndarray,
    normal_maps: Sequence[np.ndarray] | np.ndarray,
    true_labels: Sequence[np.ndarray] | np.ndarray,
    true_normals: Sequence[np.ndarray] | np.ndarray,
    params: LossParams = LossParams(),
) -> tuple[LossBreakdown, list[LossBreakdown]]:
    """Total loss over a group of views (sums of the per-view terms),
    plus the per-view breakdowns in input order. Single rasters are
    treated as a one-view group."""
    if isinstance(prob_maps, np.ndarray) and prob_maps.ndim == 3:
        prob_maps = [prob_maps]
        normal_maps = [normal_maps]
        true_labels = [true_labels]
        true_normals = [true_normals]
    views = [
        view_loss(p, n, tl, tn, params)
        for p, n, tl, tn in zip(prob_maps, normal_maps, true_labels, true_normals, strict=True)
    ]
    if not views:
        raise LabelingError("loss needs at least one view")
    total = LossBreakdown(
        sum(v.overall for v in views),
        sum(v.normal for v in views),
        sum(v.semantic for v in views),
    )
    return total, views
