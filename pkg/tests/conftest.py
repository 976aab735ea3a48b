"""Shared builders and independent oracles used across the suite."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from occkit import (
    CameraRig,
    DecouplingScheme,
    DepthDistribution,
    GridSpec,
    LabeledVoxelGrid,
)


def make_rig(
    f: float = 100.0,
    cx: float = 50.0,
    cy: float = 50.0,
    width: int = 100,
    height: int = 100,
    R_lc: np.ndarray | None = None,
    t_lc: np.ndarray | None = None,
    T_le: np.ndarray | None = None,
) -> CameraRig:
    return CameraRig(
        K=np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]]),
        R_lc=np.eye(3) if R_lc is None else R_lc,
        t_lc=np.zeros(3) if t_lc is None else t_lc,
        T_le=np.eye(4) if T_le is None else T_le,
        image_width=width,
        image_height=height,
    )


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def translation(t) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = t
    return T


@pytest.fixture
def small_spec() -> GridSpec:
    # 16x16x16 cube around the origin, 0.4 m voxels.
    return GridSpec(
        x_range=(-3.2, 3.2),
        y_range=(-3.2, 3.2),
        z_range=(-3.2, 3.2),
        voxel_size=0.4,
        num_classes=5,
    )


def small_frustum_rig(size: int = 8) -> CameraRig:
    """Rig whose rays stay inside the small_spec grid for short depths."""
    return make_rig(f=float(size), cx=size / 2.0, cy=size / 2.0, width=size, height=size)


def random_depth(rng: np.random.Generator, bins: int, h: int, w: int) -> DepthDistribution:
    weights = rng.uniform(0.0, 1.0, size=(bins, h, w))
    weights /= weights.sum(axis=0, keepdims=True) * rng.uniform(1.0, 2.0)
    return DepthDistribution(d_min=0.5, d_step=0.25, weights=weights)


def random_grid(
    rng: np.random.Generator,
    spec: GridSpec,
    occupancy: float = 0.5,
    free_label: int | None = None,
) -> LabeledVoxelGrid:
    free = spec.num_classes if free_label is None else free_label
    labels = rng.integers(0, spec.num_classes, size=spec.shape).astype(np.uint8)
    labels[rng.uniform(size=spec.shape) >= occupancy] = free
    return LabeledVoxelGrid(spec=spec, labels=labels, free_label=free)


def random_scheme(rng: np.random.Generator, nz: int) -> DecouplingScheme:
    n_cuts = int(rng.integers(0, min(4, nz - 1) + 1))
    cuts = sorted(rng.choice(np.arange(1, nz), size=n_cuts, replace=False).tolist())
    edges = [0] + cuts + [nz]
    return DecouplingScheme(tuple((lo + 1, hi) for lo, hi in zip(edges, edges[1:])))


def refine_scheme(rng: np.random.Generator, scheme: DecouplingScheme) -> DecouplingScheme:
    """Split some intervals of `scheme` in two; the result refines it."""
    out = []
    for lo, hi in scheme.intervals:
        if hi > lo and rng.uniform() < 0.7:
            mid = int(rng.integers(lo, hi))
            out.extend([(lo, mid), (mid + 1, hi)])
        else:
            out.append((lo, hi))
    return DecouplingScheme(tuple(out))


def entropy_oracle(grids, scheme: DecouplingScheme) -> float:
    """Direct summation of the weighted-entropy definition.

    Counts classes with Counter per z layer and reduces with math.fsum;
    shares no code with occkit.analysis.
    """
    per_grid = []
    for g in grids:
        layer_counts = []
        for z in range(g.spec.nz):
            layer = g.labels[:, :, z].ravel().tolist()
            layer_counts.append(Counter(x for x in layer if x != g.free_label))
        n_total = sum(sum(c.values()) for c in layer_counts)
        assert n_total > 0
        contributions = []
        for lo, hi in scheme.intervals:
            merged: Counter = Counter()
            for z in range(lo - 1, hi):
                merged += layer_counts[z]
            n_sub = sum(merged.values())
            if n_sub == 0:
                continue
            inner = math.fsum(
                (q / n_sub) * math.log2(q / n_sub) for q in merged.values()
            )
            contributions.append((n_sub / n_total) * inner)
        per_grid.append(math.fsum(contributions))
    return -math.fsum(per_grid) / len(grids)


def lift_oracle(depth: DepthDistribution, rig: CameraRig, spec: GridSpec):
    """Scalar re-derivation of the frustum: ray, ego point, voxel cell.

    Returns a list of (ix, iy, iz, u, v, weight) in depth-bin-major order.
    """
    k_inv = np.linalg.inv(rig.K)
    points = []
    for b in range(depth.bins):
        d = depth.d_min + (b + 0.5) * depth.d_step
        for v in range(depth.height):
            for u in range(depth.width):
                cam = d * (k_inv @ np.array([u, v, 1.0]))
                lidar = rig.R_lc.T @ (cam - rig.t_lc)
                ego = (rig.T_le @ np.append(lidar, 1.0))[:3]
                ix = math.floor((ego[0] - spec.x_range[0]) / spec.voxel_size)
                iy = math.floor((ego[1] - spec.y_range[0]) / spec.voxel_size)
                iz = math.floor((ego[2] - spec.z_range[0]) / spec.voxel_size)
                if 0 <= ix < spec.nx and 0 <= iy < spec.ny and 0 <= iz < spec.nz:
                    points.append((ix, iy, iz, u, v, depth.weights[b, v, u]))
    return points


def scatter_oracle(points, ctx: np.ndarray, shape) -> np.ndarray:
    """Accumulate (ix, iy, iz, u, v, w) tuples into a volume, one by one."""
    volume = np.zeros((ctx.shape[0],) + tuple(shape))
    for ix, iy, iz, u, v, w in points:
        volume[:, iz, iy, ix] += w * ctx[:, v, u]
    return volume
