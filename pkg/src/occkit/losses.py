"""Supervision losses for depth/height bins and voxel semantics.

The binary and voxel cross-entropy losses reduce by summation over the
supervised items by default, matching their defining double sums; a mean
reduction is available behind the `reduction` flag for comparability with
per-element conventions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import LabeledVoxelGrid
from .errors import DimensionError, EmptyDataError, NumericError

# Probability clamp for the binary cross entropy.
BCE_EPS = 1e-7

# Inverse-frequency weights are clamped into this range.
WEIGHT_CLAMP = (1e-3, 1e3)

# Loss weights (depth bce, height bce, voxel ce, semantic scal, geometric scal).
DEFAULT_LAMBDAS = (0.05, 0.1, 10.0, 0.2, 0.2)


@dataclass(frozen=True)
class ClassWeights:
    """Positive per-class weights for the voxel cross entropy."""

    w: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise DimensionError(f"weights must be a non-empty vector, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("class weights must be finite and positive")
        object.__setattr__(self, "w", w)

    @property
    def num_classes(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class LossBreakdown:
    """The five loss parts, their weights, and the weighted total."""

    bce_depth: float
    bce_height: float
    ce: float
    scal_sem: float
    scal_geo: float
    lambdas: tuple[float, float, float, float, float]
    total: float


def bce_loss(
    pred: np.ndarray,
    labels: np.ndarray,
    valid: np.ndarray | None = None,
    reduction: str = "sum",
) -> float:
    """Binary cross entropy over the supervised pixels.

    `pred` holds probabilities, clamped into [BCE_EPS, 1 - BCE_EPS] before
    the logs; `labels` is binary. `valid` selects the supervised pixels
    (all, when omitted). Raises EmptyDataError if nothing is supervised.
    """
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.shape != labels.shape:
        raise DimensionError(f"pred shape {pred.shape} != labels shape {labels.shape}")
    if valid is None:
        valid = np.ones(pred.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != pred.shape:
            raise DimensionError(
                f"valid shape {valid.shape} != pred shape {pred.shape}"
            )
    n = int(valid.sum())
    if n == 0:
        raise EmptyDataError("no supervised pixels")
    p = np.clip(pred[valid], BCE_EPS, 1.0 - BCE_EPS)
    y = labels[valid]
    terms = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    total = -float(terms.sum())
    return total / n if reduction == "mean" else total


def inverse_frequency_weights(grids: list[LabeledVoxelGrid]) -> ClassWeights:
    """Per-class weights proportional to inverse occupied-voxel frequency.

    w_j = total_occupied / (num_classes * count_j), clamped into
    WEIGHT_CLAMP. Classes that never occur get the upper clamp and a
    warning.
    """
    if not grids:
        raise EmptyDataError("at least one grid is required")
    nc = grids[0].spec.num_classes
    counts = np.zeros(nc, dtype=np.int64)
    for g in grids:
        occ = g.occupied
        counts += np.bincount(g.labels[occ].astype(np.int64), minlength=nc)[:nc]
    total = counts.sum()
    if total == 0:
        raise EmptyDataError("grids hold no occupied voxels")

    lo, hi = WEIGHT_CLAMP
    w = np.full(nc, hi)
    present = counts > 0
    w[present] = np.clip(total / (nc * counts[present]), lo, hi)
    absent = np.nonzero(~present)[0]
    if absent.size:
        warnings.warn(
            f"classes {absent.tolist()} absent from the grids; "
            f"weights clamped to {hi}",
            stacklevel=2,
        )
    return ClassWeights(w)


def weighted_ce(
    logits: np.ndarray,
    labels: LabeledVoxelGrid,
    weights: ClassWeights,
    reduction: str = "sum",
) -> float:
    """Weighted softmax cross entropy over voxels.

    `logits` is (nx, ny, nz, L) with L equal to the weight count. Voxels
    whose label is outside [0, L) (the free label, unless logits carry a
    free channel) are not supervised.
    """
    logits = np.asarray(logits, dtype=np.float64)
    expected = labels.spec.shape + (weights.num_classes,)
    if logits.shape != expected:
        raise DimensionError(f"logits shape {logits.shape}, expected {expected}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits contain non-finite values")

    lab = labels.labels.reshape(-1)
    supervised = lab < weights.num_classes
    lab = lab[supervised].astype(np.int64)
    flat = logits.reshape(-1, weights.num_classes)[supervised]

    shifted = flat - flat.max(axis=1, keepdims=True)
    log_softmax = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = log_softmax[np.arange(lab.size), lab]
    total = -float((weights.w[lab] * picked).sum())
    return total / lab.size if reduction == "mean" and lab.size else total


def total_loss(
    bce_depth: float,
    bce_height: float,
    ce: float,
    scal_sem: float,
    scal_geo: float,
    lambdas: tuple[float, float, float, float, float] = DEFAULT_LAMBDAS,
    depth_supervision: bool = True,
) -> LossBreakdown:
    """Weighted sum of the five parts.

    `depth_supervision=False` zeroes the depth term's weight (the
    no-depth-supervision training configuration). The total uses exact
    summation so the unit-parts case is reproduced digit for digit.
    """
    parts = (bce_depth, bce_height, ce, scal_sem, scal_geo)
    if not all(math.isfinite(p) for p in parts):
        raise NumericError("loss parts must be finite")
    lam = tuple(float(x) for x in lambdas)
    if len(lam) != 5:
        raise DimensionError(f"expected 5 lambdas, got {len(lam)}")
    if not depth_supervision:
        lam = (0.0,) + lam[1:]
    total = math.fsum(l * p for l, p in zip(lam, parts))
    return LossBreakdown(
        bce_depth=bce_depth,
        bce_height=bce_height,
        ce=ce,
        scal_sem=scal_sem,
        scal_geo=scal_geo,
        lambdas=lam,
        total=total,
    )
