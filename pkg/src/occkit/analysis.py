"""Class-height statistics of labeled occupancy grids.

The weighted average entropy of a decoupling scheme measures how mixed the
class populations of its height subspaces are: per grid it is the
occupancy-weighted mean of the within-subspace class entropies (the
conditional entropy of the class label given the subspace), averaged over
grids. Splitting a subspace can never increase it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._threads import parallel_map
from .errors import DimensionError, EmptyDataError
from .grid import GridSpec
from .pooling import DecouplingScheme


@dataclass
class LabeledVoxelGrid:
    """Dense semantic voxel labels over a grid.

    `labels` is (nx, ny, nz) with small-integer class ids; `free_label`
    (by default the id one past the last semantic class) marks unoccupied
    voxels.
    """

    spec: GridSpec
    labels: np.ndarray
    free_label: int = field(default=-1)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels)
        if self.free_label < 0:
            self.free_label = self.spec.num_classes
        if self.labels.shape != self.spec.shape:
            raise DimensionError(
                f"labels shape {self.labels.shape} does not match grid shape "
                f"{self.spec.shape}"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        occupied = self.labels[self.labels != self.free_label]
        if occupied.size and occupied.max() >= self.spec.num_classes:
            raise ValueError(
                f"occupied labels must be < {self.spec.num_classes}, "
                f"found {int(occupied.max())}"
            )

    @property
    def occupied(self) -> np.ndarray:
        return self.labels != self.free_label

    def occupied_count(self) -> int:
        return int(self.occupied.sum())


def _check_shared_spec(grids: list[LabeledVoxelGrid]) -> GridSpec:
    if not grids:
        raise EmptyDataError("at least one grid is required")
    spec = grids[0].spec
    for g in grids[1:]:
        if g.spec.shape != spec.shape or g.spec.num_classes != spec.num_classes:
            raise DimensionError(
                f"grid shape {g.spec.shape} does not match {spec.shape}"
            )
    return spec


def class_height_histogram(
    grids: list[LabeledVoxelGrid], threads: int = 1
) -> np.ndarray:
    """Count occupied voxels per (class, height bin), summed over grids.

    Returns an int64 array of shape (num_classes, nz); free voxels are
    excluded.
    """
    spec = _check_shared_spec(grids)
    nc, nz = spec.num_classes, spec.nz

    def one_grid(g: LabeledVoxelGrid) -> np.ndarray:
        occ = g.occupied
        zs = np.broadcast_to(np.arange(nz), g.labels.shape)[occ]
        pair = g.labels[occ].astype(np.int64) * nz + zs
        return np.bincount(pair, minlength=nc * nz).reshape(nc, nz)

    parts = parallel_map(one_grid, grids, threads)
    total = np.zeros((nc, nz), dtype=np.int64)
    for p in parts:
        total += p
    return total


def height_cdf(hist: np.ndarray) -> np.ndarray:
    """Cumulative occupied-voxel fraction by height bin.

    cdf[z] is the fraction of occupied voxels with bin <= z+1; the last
    entry is exactly 1.
    """
    hist = np.asarray(hist)
    per_layer = hist.sum(axis=0, dtype=np.float64)
    total = per_layer.sum()
    if total <= 0:
        raise EmptyDataError("histogram holds no occupied voxels")
    cdf = np.cumsum(per_layer) / total
    cdf[-1] = 1.0
    return cdf


def _grid_entropy(g: LabeledVoxelGrid, scheme: DecouplingScheme) -> float:
    occupied_total = g.occupied_count()
    if occupied_total == 0:
        raise EmptyDataError("grid has no occupied voxels")
    acc = 0.0
    for lo, hi in scheme.intervals:
        slab = g.labels[:, :, lo - 1 : hi]
        occ = slab != g.free_label
        n_sub = int(occ.sum())
        if n_sub == 0:
            continue  # empty subspace contributes zero
        counts = np.bincount(slab[occ].astype(np.int64), minlength=g.spec.num_classes)
        p = counts[counts > 0] / n_sub
        inner = float(np.sum(p * np.log2(p)))
        acc += (n_sub / occupied_total) * inner
    return acc


def weighted_entropy(
    grids: list[LabeledVoxelGrid],
    scheme: DecouplingScheme,
    threads: int = 1,
) -> float:
    """Weighted average entropy of a height-decoupling scheme.

    Per grid and interval, the class distribution of the occupied voxels
    inside that height slab contributes its Shannon entropy (base 2),
    weighted by the slab's share of the grid's occupied voxels; empty
    slabs contribute zero. The result is averaged over grids and negated
    into a non-negative score. Smaller means the subspaces are purer.
    """
    spec = _check_shared_spec(grids)
    scheme.validate_for(spec.nz)
    parts = parallel_map(lambda g: _grid_entropy(g, scheme), grids, threads)
    total = 0.0
    for p in parts:
        total += p
    value = -total / len(grids)
    return 0.0 if value == 0.0 else value  # normalize -0.0


def format_sig(x) -> str:
    """Fixed 9-significant-digit formatting used by every CSV emitter."""
    return f"{x:.9g}"


def histogram_csv(hist: np.ndarray) -> str:
    lines = ["class,height_bin,count"]
    nc, nz = hist.shape
    for j in range(nc):
        for z in range(nz):
            lines.append(f"{j},{z + 1},{int(hist[j, z])}")
    return "\n".join(lines) + "\n"


def cdf_csv(cdf: np.ndarray) -> str:
    lines = ["height_bin,cdf"]
    for z, value in enumerate(cdf):
        lines.append(f"{z + 1},{format_sig(value)}")
    return "\n".join(lines) + "\n"


def entropy_csv(rows: list[tuple[DecouplingScheme, float]]) -> str:
    """Rows of (scheme, interval count, entropy), one scheme per line."""
    lines = ["scheme,num_intervals,entropy"]
    for scheme, value in rows:
        lines.append(f"{scheme},{scheme.num_intervals},{format_sig(value)}")
    return "\n".join(lines) + "\n"
