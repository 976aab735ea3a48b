"""2D-to-3D view transformation: frustum lifting and feature pooling.

A feature map is a plain (C, H, W) float array. Pooled volumes are
(C, nz, ny, nx) arrays; bird's-eye-view volumes keep a unit z axis.

All pooling reduces by summation. Per cell, contributions are accumulated
in frustum emission order (depth-bin major, then row, then column), which
makes results bit-reproducible regardless of the thread count: threads
only ever split independent channels or intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._threads import parallel_map
from .errors import DimensionError, ParseError
from .geometry import CameraRig, ScalarMap
from .grid import GridSpec


@dataclass(frozen=True)
class DepthDistribution:
    """Per-pixel categorical depth weights over uniform metric bins.

    Bin b spans [d_min + b*d_step, d_min + (b+1)*d_step); ray samples are
    taken at bin centers. `weights` is (bins, H, W), non-negative, with
    per-pixel sums at most 1 (up to 1e-6 slack).
    """

    d_min: float
    d_step: float
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise DimensionError(f"weights must be (bins, H, W), got {w.shape}")
        if self.d_step <= 0:
            raise ValueError("d_step must be positive")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if np.any(w.sum(axis=0) > 1.0 + 1e-6):
            raise ValueError("per-pixel weight sums must not exceed 1")
        object.__setattr__(self, "weights", w)

    @property
    def bins(self) -> int:
        return self.weights.shape[0]

    @property
    def height(self) -> int:
        return self.weights.shape[1]

    @property
    def width(self) -> int:
        return self.weights.shape[2]


@dataclass(frozen=True)
class DecouplingScheme:
    """Ordered disjoint height-bin intervals covering [1, nz]."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        ivals = tuple((int(lo), int(hi)) for lo, hi in self.intervals)
        if not ivals:
            raise ValueError("a scheme needs at least one interval")
        for lo, hi in ivals:
            if lo < 1 or hi < lo:
                raise ValueError(f"invalid interval [{lo}, {hi}]")
        for (_, prev_hi), (lo, _) in zip(ivals, ivals[1:]):
            if lo <= prev_hi:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", ivals)

    @classmethod
    def parse(cls, text: str) -> "DecouplingScheme":
        """Parse the CLI form "1-4,5-8,9-16"."""
        intervals = []
        for part in text.split(","):
            lo, sep, hi = part.strip().partition("-")
            try:
                intervals.append((int(lo), int(hi if sep else lo)))
            except ValueError as exc:
                raise ParseError(f"bad interval {part!r} in scheme {text!r}") from exc
        return cls(tuple(intervals))

    def __str__(self) -> str:
        return ",".join(f"{lo}-{hi}" for lo, hi in self.intervals)

    @property
    def num_intervals(self) -> int:
        return len(self.intervals)

    def validate_for(self, nz: int) -> None:
        """Check that the intervals exactly tile [1, nz]."""
        if self.intervals[0][0] != 1 or self.intervals[-1][1] != nz:
            raise ValueError(f"scheme {self} does not cover [1, {nz}]")
        for (_, prev_hi), (lo, _) in zip(self.intervals, self.intervals[1:]):
            if lo != prev_hi + 1:
                raise ValueError(f"scheme {self} leaves a gap before bin {lo}")

    def refines(self, other: "DecouplingScheme") -> bool:
        """True if every interval of self lies inside an interval of other."""
        return all(
            any(olo <= lo and hi <= ohi for olo, ohi in other.intervals)
            for lo, hi in self.intervals
        )


@dataclass(frozen=True)
class Frustum:
    """Lifted ray samples as parallel arrays.

    (ix, iy, iz) are voxel indices inside the grid, (u, v) the source pixel
    and `weight` the depth-bin weight. Order is emission order: depth-bin
    major, then image row, then image column.
    """

    ix: np.ndarray
    iy: np.ndarray
    iz: np.ndarray
    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return self.ix.shape[0]


def gen_frustum(
    ctx: np.ndarray,
    depth: DepthDistribution,
    rig: CameraRig,
    spec: GridSpec,
) -> Frustum:
    """Sweep every pixel ray over the depth bins and bucket into voxels.

    For pixel (u, v) and bin b the 3D sample sits at depth
    d_min + (b + 0.5) * d_step along the ray through (u, v), expressed in
    the ego frame. Samples outside the grid are discarded; grid cells are
    half-open on their upper faces.
    """
    ctx = np.asarray(ctx, dtype=np.float64)
    if ctx.ndim != 3:
        raise DimensionError(f"ctx must be (C, H, W), got {ctx.shape}")
    if ctx.shape[1:] != (depth.height, depth.width):
        raise DimensionError(
            f"ctx spatial shape {ctx.shape[1:]} does not match depth weights "
            f"shape {(depth.height, depth.width)}"
        )

    d, h, w = depth.bins, depth.height, depth.width
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    pix = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    rays = pix @ np.linalg.inv(rig.K).T  # camera-frame directions, z = 1

    depths = depth.d_min + (np.arange(d, dtype=np.float64) + 0.5) * depth.d_step
    cam = depths[:, None, None] * rays[None, :, :]  # (D, H*W, 3)
    ego = rig.camera_to_ego(cam.reshape(-1, 3))

    ix = np.floor((ego[:, 0] - spec.x_range[0]) / spec.voxel_size).astype(np.int64)
    iy = np.floor((ego[:, 1] - spec.y_range[0]) / spec.voxel_size).astype(np.int64)
    iz = np.floor((ego[:, 2] - spec.z_range[0]) / spec.voxel_size).astype(np.int64)
    inside = (
        (ix >= 0)
        & (ix < spec.nx)
        & (iy >= 0)
        & (iy < spec.ny)
        & (iz >= 0)
        & (iz < spec.nz)
    )

    keep = np.nonzero(inside)[0]
    pixel = keep % (h * w)
    return Frustum(
        ix=ix[keep],
        iy=iy[keep],
        iz=iz[keep],
        u=(pixel % w).astype(np.int64),
        v=(pixel // w).astype(np.int64),
        weight=depth.weights.reshape(d, -1)[keep // (h * w), pixel],
    )


def _accumulate(
    frustum: Frustum,
    ctx: np.ndarray,
    iz: np.ndarray,
    shape: tuple[int, int, int],
    threads: int = 1,
) -> np.ndarray:
    """Scatter-add weighted pixel features into a (C, nz, ny, nx) volume.

    np.bincount folds contributions strictly in input order, so per-cell
    accumulation order is the frustum order for every thread count; threads
    split channels, which are independent.
    """
    nz, ny, nx = shape
    cells = (iz * ny + frustum.iy) * nx + frustum.ix
    feats = ctx[:, frustum.v, frustum.u] * frustum.weight

    def one_channel(c: int) -> np.ndarray:
        return np.bincount(cells, weights=feats[c], minlength=nz * ny * nx)

    channels = parallel_map(one_channel, range(ctx.shape[0]), threads)
    return np.stack(channels).reshape(ctx.shape[0], nz, ny, nx)


def voxel_pool(
    frustum: Frustum, ctx: np.ndarray, spec: GridSpec, threads: int = 1
) -> np.ndarray:
    """Sum weighted features per voxel; empty cells stay zero."""
    ctx = np.asarray(ctx, dtype=np.float64)
    return _accumulate(frustum, ctx, frustum.iz, (spec.nz, spec.ny, spec.nx), threads)


def bev_pool(
    frustum: Frustum, ctx: np.ndarray, spec: GridSpec, threads: int = 1
) -> np.ndarray:
    """Voxel pooling with the height axis collapsed to a single layer."""
    return voxel_pool(frustum, ctx, spec, threads).sum(axis=1, keepdims=True)


def decouple_masks(h_map: ScalarMap, scheme: DecouplingScheme) -> np.ndarray:
    """Expand a bin-valued height map into one binary mask per interval.

    Mask k is true exactly where the pixel is valid and its bin lies in
    interval k; invalid pixels are false in every mask. Returns a
    (K, H, W) boolean array.
    """
    bins = np.rint(np.where(h_map.valid, h_map.values, 0.0)).astype(np.int64)
    masks = np.zeros((scheme.num_intervals, *h_map.values.shape), dtype=bool)
    for k, (lo, hi) in enumerate(scheme.intervals):
        masks[k] = h_map.valid & (bins >= lo) & (bins <= hi)
    return masks


def mask_features(ctx: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero a feature map outside a binary pixel mask."""
    ctx = np.asarray(ctx, dtype=np.float64)
    mask = np.asarray(mask)
    if ctx.ndim != 3 or mask.shape != ctx.shape[1:]:
        raise DimensionError(
            f"mask shape {mask.shape} does not match feature map spatial shape "
            f"{ctx.shape[1:] if ctx.ndim == 3 else ctx.shape}"
        )
    return ctx * mask.astype(np.float64)


def mghs_project(
    ctx: np.ndarray,
    depth: DepthDistribution,
    h_map: ScalarMap,
    scheme: DecouplingScheme,
    rig: CameraRig,
    spec: GridSpec,
    threads: int = 1,
    masks: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Mask-guided height sampling: per-interval masked pooling.

    For each interval the feature map is zeroed outside that interval's
    height mask, then pooled into the interval's slab of the voxel grid;
    frustum samples whose voxel height falls outside the interval are
    discarded. Returns one (C, hi-lo+1, ny, nx) volume per interval, in
    interval order; their z-concatenation spans the full grid.

    `masks` replaces the masks derived from the height map (shape
    (K, H, W)), e.g. all-ones masks to measure what masking filters out.
    """
    ctx = np.asarray(ctx, dtype=np.float64)
    if h_map.values.shape != ctx.shape[1:]:
        raise DimensionError(
            f"height map shape {h_map.values.shape} does not match feature map "
            f"spatial shape {ctx.shape[1:]}"
        )
    scheme.validate_for(spec.nz)
    frustum = gen_frustum(ctx, depth, rig, spec)
    if masks is None:
        masks = decouple_masks(h_map, scheme)
    elif masks.shape != (scheme.num_intervals, *ctx.shape[1:]):
        raise DimensionError(
            f"masks shape {masks.shape}, expected "
            f"{(scheme.num_intervals, *ctx.shape[1:])}"
        )

    def one_interval(k: int) -> np.ndarray:
        lo, hi = scheme.intervals[k]
        keep = (frustum.iz >= lo - 1) & (frustum.iz <= hi - 1)
        sub = Frustum(
            ix=frustum.ix[keep],
            iy=frustum.iy[keep],
            iz=frustum.iz[keep],
            u=frustum.u[keep],
            v=frustum.v[keep],
            weight=frustum.weight[keep],
        )
        masked = mask_features(ctx, masks[k])
        local_z = sub.iz - (lo - 1)
        return _accumulate(sub, masked, local_z, (hi - lo + 1, spec.ny, spec.nx))

    return parallel_map(one_interval, range(scheme.num_intervals), threads)
