"""Depth sensor corruption model.

Applied to clean rendered depth in this order: depth-dependent Gaussian
noise, quantisation, background clutter fill, and finally invalidation of
pixels near label edges (real sensors drop flying pixels at silhouettes,
and that hits clutter too).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, MAX_DEPTH_M, validate_depth

BACKGROUND_MODES = ("none", "planes", "uniform")


@dataclass(frozen=True)
class NoiseParams:
    """sigma(d) = sigma_base + sigma_quad * d^2, step q quantisation,
    edge dropout probability and background clutter mode."""

    sigma_base: float = 0.001
    sigma_quad: float = 0.0025
    quant_step: float = 0.001
    edge_dropout: float = 0.15
    background: str = "planes"
    background_min: float = 0.8
    background_max: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_base < 0 or self.sigma_quad < 0:
            raise GeometryError("noise magnitudes must be non-negative")
        if self.quant_step < 0:
            raise GeometryError("quantisation step must be non-negative")
        if not 0 <= self.edge_dropout <= 1:
            raise GeometryError("edge dropout must be a probability")
        if self.background not in BACKGROUND_MODES:
            raise GeometryError(f"unknown background mode {self.background!r}")

    def to_dict(self) -> dict:
        return {
            "sigma_base": self.sigma_base,
            "sigma_quad": self.sigma_quad,
            "quant_step": self.quant_step,
            "edge_dropout": self.edge_dropout,
            "background": self.background,
            "background_min": self.background_min,
            "background_max": self.background_max,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "NoiseParams":
        return NoiseParams(**{k: data[k] for k in NoiseParams().to_dict() if k in data})


def label_edge_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighbourhood contains a different label."""
    lab = np.asarray(labels)
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    return edge


def _quantize(depth: np.ndarray, step: float) -> np.ndarray:
    if step <= 0:
        return depth
    return np.round(depth / step) * step


def _background_depths(
    shape: tuple[int, int], params: NoiseParams, rng: np.random.Generator, base_depth: float
) -> np.ndarray:
    """Clutter placed well behind the structure so a depth cutoff can
    separate the two."""
    h, w = shape
    lo = base_depth + params.background_min
    hi = base_depth + params.background_max
    if params.background == "uniform":
        return rng.uniform(lo, hi, size=(h, w))
    # "planes": a few tilted planes in image space, like walls and floor
    out = np.full((h, w), hi)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    for _ in range(3):
        d0 = rng.uniform(lo, hi)
        gu = rng.uniform(-0.5, 0.5) * (hi - lo) / max(w, 1)
        gv = rng.uniform(-0.5, 0.5) * (hi - lo) / max(h, 1)
        plane = d0 + gu * (uu - w / 2) + gv * (vv - h / 2)
        out = np.minimum(out, plane)
    return np.clip(out, lo, hi)


def corrupt(
    depth: np.ndarray,
    labels: np.ndarray,
    params: NoiseParams = NoiseParams(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Corrupt a clean depth raster. Labels steer edge dropout and
    background fill but are never modified."""
    d = validate_depth(depth).copy()
    lab = np.asarray(labels)
    if lab.shape != d.shape:
        raise GeometryError("labels must match depth shape")
    if rng is None:
        rng = np.random.default_rng(params.seed)

    valid = d > 0
    if params.sigma_base > 0 or params.sigma_quad > 0:
        sigma = params.sigma_base + params.sigma_quad * d[valid] ** 2
        d[valid] += rng.normal(size=sigma.shape) * sigma

    d[valid] = _quantize(d[valid], params.quant_step)

    if params.background != "none":
        base = float(d[valid].max()) if valid.any() else 1.0
        bg = _background_depths(d.shape, params, rng, base)
        bg = _quantize(bg, params.quant_step)
        fill = lab == 0
        d[fill] = bg[fill]

    edge = label_edge_mask(lab)
    if params.edge_dropout > 0 and edge.any():
        drop = edge & (rng.random(d.shape) <= params.edge_dropout)
        d[drop] = 0.0

    np.clip(d, 0.0, MAX_DEPTH_M, out=d)
    d[d <= 0] = 0.0
    return d
