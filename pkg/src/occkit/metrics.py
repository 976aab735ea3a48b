"""Evaluation metric for labeled occupancy grids."""

from __future__ import annotations

import numpy as np

from .analysis import LabeledVoxelGrid
from .errors import DimensionError


def miou(pred: LabeledVoxelGrid, gt: LabeledVoxelGrid) -> tuple[np.ndarray, float]:
    """Per-class intersection over union and its mean.

    IoU is computed for each semantic class (free voxels never count);
    classes absent from both grids get NaN and are excluded from the mean.
    Returns (per-class IoU vector, mIoU).
    """
    if pred.spec.shape != gt.spec.shape or pred.spec.num_classes != gt.spec.num_classes:
        raise DimensionError(
            f"pred grid {pred.spec.shape} does not match gt grid {gt.spec.shape}"
        )
    nc = pred.spec.num_classes
    ious = np.full(nc, np.nan)
    for j in range(nc):
        p = pred.labels == j
        g = gt.labels == j
        union = int(np.logical_or(p, g).sum())
        if union == 0:
            continue
        ious[j] = int(np.logical_and(p, g).sum()) / union
    included = ~np.isnan(ious)
    if not included.any():
        return ious, float("nan")
    return ious, float(ious[included].mean())
