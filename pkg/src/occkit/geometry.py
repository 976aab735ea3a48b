"""Camera/LiDAR projection geometry and z-buffered ground-truth maps.

Coordinate conventions:
    LiDAR frame   -- sensor-centric (x, y, z) in meters.
    Camera frame  -- x right, y down, z forward (optical axis); depth is the
                     camera-frame z coordinate.
    Ego frame     -- vehicle-centric; voxel-grid heights are ego z values.
    Image frame   -- u right, v down, integer pixel indices from the top left.

All math runs in float64. Everything here is a pure function over immutable
inputs, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# Points closer to the image plane than this are dropped before the
# perspective division rather than reported as errors.
MIN_DEPTH = 1e-9

CHANNEL_HEIGHT = "height"
CHANNEL_DEPTH = "depth"

_ORTHONORMAL_TOL = 1e-6


def _as_float_matrix(value, shape, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise DimensionError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class CameraRig:
    """Camera intrinsics plus the LiDAR->camera and LiDAR->ego transforms.

    Attributes:
        K: 3x3 intrinsic matrix in pixels.
        R_lc: 3x3 rotation, LiDAR frame to camera frame.
        t_lc: 3-vector translation, LiDAR frame to camera frame (meters).
        T_le: 4x4 homogeneous transform, LiDAR frame to ego frame (meters).
        image_width, image_height: sensor size in pixels.
    """

    K: np.ndarray
    R_lc: np.ndarray
    t_lc: np.ndarray
    T_le: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        K = _as_float_matrix(self.K, (3, 3), "K")
        R = _as_float_matrix(self.R_lc, (3, 3), "R_lc")
        t = _as_float_matrix(self.t_lc, (3,), "t_lc")
        T = _as_float_matrix(self.T_le, (4, 4), "T_le")

        if K[2, 2] != 1.0:
            raise ValueError("K[2][2] must equal 1")
        if K[0, 0] <= 0.0 or K[1, 1] <= 0.0:
            raise ValueError("focal lengths K[0][0] and K[1][1] must be positive")
        if K[1, 0] != 0.0 or K[2, 0] != 0.0 or K[2, 1] != 0.0:
            raise ValueError("K must be upper triangular in its lower entries")
        if np.max(np.abs(R.T @ R - np.eye(3))) >= _ORTHONORMAL_TOL:
            raise ValueError("R_lc is not orthonormal")
        if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("T_le bottom row must be (0, 0, 0, 1)")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")

        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R_lc", R)
        object.__setattr__(self, "t_lc", t)
        object.__setattr__(self, "T_le", T)
        object.__setattr__(self, "image_width", int(self.image_width))
        object.__setattr__(self, "image_height", int(self.image_height))

    def camera_to_ego(self, points_cam: np.ndarray) -> np.ndarray:
        """Map camera-frame points (N, 3) into the ego frame."""
        points_cam = np.asarray(points_cam, dtype=np.float64)
        lidar = (points_cam - self.t_lc) @ self.R_lc
        return lidar @ self.T_le[:3, :3].T + self.T_le[:3, 3]


@dataclass(frozen=True)
class ProjectedPoints:
    """LiDAR points that landed on the image, as parallel arrays.

    Each entry carries the integer pixel (u, v), the camera-frame depth,
    the ego-frame height and the index of the originating cloud point.
    """

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    ego_height: np.ndarray
    source_index: np.ndarray

    def __len__(self) -> int:
        return self.u.shape[0]


@dataclass
class ScalarMap:
    """Per-pixel scalar map with an explicit validity mask.

    `values` is (height, width) float64 and is only meaningful where
    `valid` is true. `channel` tags the payload as "height" or "depth".
    """

    values: np.ndarray
    valid: np.ndarray
    channel: str = CHANNEL_HEIGHT

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise DimensionError(
                f"values shape {self.values.shape} and valid shape "
                f"{self.valid.shape} must be equal 2-d shapes"
            )
        if self.channel not in (CHANNEL_HEIGHT, CHANNEL_DEPTH):
            raise ValueError(f"unknown channel {self.channel!r}")
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("values must be finite wherever valid")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _as_cloud(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionError(f"point cloud must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


def lidar_to_ego(points, rig: CameraRig) -> np.ndarray:
    """Apply the LiDAR->ego transform to a cloud of shape (N, 3)."""
    cloud = _as_cloud(points)
    return cloud @ rig.T_le[:3, :3].T + rig.T_le[:3, 3]


def project_points(points, rig: CameraRig) -> ProjectedPoints:
    """Perspective-project a LiDAR cloud onto the image plane.

    Each point is mapped through the intrinsic matrix and the LiDAR->camera
    extrinsics; the pixel is the floor of the perspective division. Points
    behind the camera (depth <= MIN_DEPTH) and points that fall outside the
    image are dropped. Output order follows input order, and `ego_height`
    is the point's z coordinate after the LiDAR->ego transform.
    """
    cloud = _as_cloud(points)
    cam = cloud @ rig.R_lc.T + rig.t_lc
    depth = cam[:, 2]
    ego_z = lidar_to_ego(cloud, rig)[:, 2]

    in_front = depth > MIN_DEPTH
    pix = cam @ rig.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.floor(pix[:, 0] / depth)
        v = np.floor(pix[:, 1] / depth)

    keep = (
        in_front
        & (u >= 0)
        & (u < rig.image_width)
        & (v >= 0)
        & (v < rig.image_height)
    )
    idx = np.nonzero(keep)[0]
    return ProjectedPoints(
        u=u[idx].astype(np.int64),
        v=v[idx].astype(np.int64),
        depth=depth[idx],
        ego_height=ego_z[idx],
        source_index=idx.astype(np.int64),
    )


def zbuffer_map(
    points: ProjectedPoints, width: int, height: int, channel: str = CHANNEL_HEIGHT
) -> ScalarMap:
    """Collapse projected points to one value per pixel, nearest depth wins.

    Pixels with at least one candidate keep the candidate with the smallest
    depth (ties broken by the smallest source index) and store its ego
    height or its depth, depending on `channel`. All other pixels are
    marked invalid.
    """
    if channel not in (CHANNEL_HEIGHT, CHANNEL_DEPTH):
        raise ValueError(f"unknown channel {channel!r}")
    values = np.full((height, width), np.nan)
    valid = np.zeros((height, width), dtype=bool)
    if len(points) == 0:
        return ScalarMap(values, valid, channel)

    if np.any(points.u < 0) or np.any(points.u >= width) or np.any(
        points.v < 0
    ) or np.any(points.v >= height):
        raise ValueError("projected points fall outside the target map")

    flat = points.v * width + points.u
    # Sort by (pixel, depth, source index); the first entry per pixel wins.
    order = np.lexsort((points.source_index, points.depth, flat))
    flat_sorted = flat[order]
    first = np.ones(flat_sorted.shape[0], dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    winners = order[first]

    payload = points.ego_height if channel == CHANNEL_HEIGHT else points.depth
    values.reshape(-1)[flat[winners]] = payload[winners]
    valid.reshape(-1)[flat[winners]] = True
    return ScalarMap(values, valid, channel)
