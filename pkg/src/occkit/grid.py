"""Voxel-grid specification and height-bin discretization.

Height bins are 1-based so that bin b covers the half-open metric slab
[z_min + (b-1)*voxel, z_min + b*voxel). Bin 0 is the out-of-range marker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .geometry import CHANNEL_HEIGHT, ScalarMap

# Marker returned by height_to_bin for heights outside [z_min, z_max).
OUT_OF_RANGE = 0


@dataclass(frozen=True)
class GridSpec:
    """Metric extents and resolution of the occupancy voxel grid."""

    x_range: tuple[float, float] = (-40.0, 40.0)
    y_range: tuple[float, float] = (-40.0, 40.0)
    z_range: tuple[float, float] = (-1.0, 5.4)
    voxel_size: float = 0.4
    num_classes: int = 17

    def __post_init__(self) -> None:
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if hi <= lo:
                raise ValueError("grid ranges must have max > min")
        if self.num_classes <= 0:
            raise ValueError("num_classes must be positive")
        if min(self.nx, self.ny, self.nz) <= 0:
            raise ValueError("grid must contain at least one voxel per axis")

    @classmethod
    def occ3d_nuscenes(cls) -> "GridSpec":
        """The Occ3D-nuScenes grid: 80 m squares, z in [-1, 5.4], 0.4 m voxels."""
        return cls()

    @classmethod
    def for_dims(
        cls,
        nx: int,
        ny: int,
        nz: int,
        voxel_size: float = 0.4,
        num_classes: int = 17,
    ) -> "GridSpec":
        """Build a spec from voxel counts alone.

        x and y are centered on the origin and z starts at -1 m, mirroring
        the Occ3D convention. Used when a grid file supplies only dimensions.
        """
        return cls(
            x_range=(-nx * voxel_size / 2.0, nx * voxel_size / 2.0),
            y_range=(-ny * voxel_size / 2.0, ny * voxel_size / 2.0),
            z_range=(-1.0, -1.0 + nz * voxel_size),
            voxel_size=voxel_size,
            num_classes=num_classes,
        )

    def _count(self, rng: tuple[float, float]) -> int:
        return int(round((rng[1] - rng[0]) / self.voxel_size))

    @property
    def nx(self) -> int:
        return self._count(self.x_range)

    @property
    def ny(self) -> int:
        return self._count(self.y_range)

    @property
    def nz(self) -> int:
        return self._count(self.z_range)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)


def height_to_bin(ego_height, spec: GridSpec):
    """Convert metric ego heights to 1-based height bins.

    Heights in [z_min, z_max) map to bins 1..nz; anything else maps to
    OUT_OF_RANGE (0). Accepts scalars or arrays and follows numpy
    broadcasting, returning int64.
    """
    z = np.asarray(ego_height, dtype=np.float64)
    z_min = spec.z_range[0]
    with np.errstate(invalid="ignore"):
        cell = np.floor((z - z_min) / spec.voxel_size)
    in_range = np.isfinite(z) & (cell >= 0) & (cell < spec.nz)
    bins = np.where(in_range, cell + 1, OUT_OF_RANGE).astype(np.int64)
    if np.ndim(ego_height) == 0:
        return int(bins)
    return bins


def one_hot_height(height_map: ScalarMap, spec: GridSpec) -> np.ndarray:
    """One-hot encode a metric height map into an (nz, H, W) volume.

    Valid pixels whose bin lies in [1, nz] get a 1 in channel bin-1;
    invalid or out-of-range pixels are zero across all channels.
    """
    if height_map.channel != CHANNEL_HEIGHT:
        raise ValueError("one_hot_height expects a height-channel map")
    h, w = height_map.values.shape
    bins = height_to_bin(np.where(height_map.valid, height_map.values, np.nan), spec)
    volume = np.zeros((spec.nz, h, w))
    vv, uu = np.nonzero(height_map.valid & (bins != OUT_OF_RANGE))
    volume[bins[vv, uu] - 1, vv, uu] = 1.0
    return volume


def argmax_height(volume: np.ndarray) -> ScalarMap:
    """Decode an (nz, H, W) logit volume to a bin-valued map.

    Per pixel the value is 1 plus the index of the maximal channel; ties go
    to the smallest channel index. Every pixel of the result is valid.
    """
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise DimensionError(f"expected (bins, H, W) volume, got shape {volume.shape}")
    if not np.all(np.isfinite(volume)):
        raise ValueError("volume must be finite")
    bins = np.argmax(volume, axis=0) + 1
    return ScalarMap(
        values=bins.astype(np.float64),
        valid=np.ones(bins.shape, dtype=bool),
        channel=CHANNEL_HEIGHT,
    )


def bin_heights(height_map: ScalarMap, spec: GridSpec) -> ScalarMap:
    """Convert a metric height map to a bin-valued one.

    Pixels that are invalid or whose height falls outside the grid become
    invalid in the result.
    """
    if height_map.channel != CHANNEL_HEIGHT:
        raise ValueError("bin_heights expects a height-channel map")
    bins = height_to_bin(np.where(height_map.valid, height_map.values, np.nan), spec)
    valid = height_map.valid & (bins != OUT_OF_RANGE)
    values = np.where(valid, bins.astype(np.float64), np.nan)
    return ScalarMap(values=values, valid=valid, channel=CHANNEL_HEIGHT)
