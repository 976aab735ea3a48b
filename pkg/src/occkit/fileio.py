"""Readers and writers for the on-disk formats.

Binary layouts are little-endian with a 4-byte ASCII magic:

    OCPC  point cloud      u32 count; count x 3 f32 (x, y, z)
    OCSM  scalar map       u32 width, height; u8 tag (0 height, 1 depth);
                           height*width f32 row-major, NaN = invalid
    OCHV  height volume    u32 width, height, bins; bins*height*width f32
    OCFM  feature map      u32 channels, height, width; data f32
    OCDD  depth weights    u32 bins, height, width; f32 d_min, d_step; data f32
    OCFV  feature volume   u32 channels, nz, ny, nx; data f32
    OCVG  labeled grid     u32 nx, ny, nz; u8 free_label, num_classes;
                           nx*ny*nz u8 labels
    OCSP  fusion params    u32 channels, reduction; f32 blocks in field order

The camera rig is plain text, one key=value line per entry with
space-separated numbers: K (9, row-major), R_lc (9), t_lc (3), T_le (16),
width, height.

Every writer/reader pair round-trips byte-identically.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .analysis import LabeledVoxelGrid
from .errors import ParseError
from .geometry import CHANNEL_DEPTH, CHANNEL_HEIGHT, CameraRig, ScalarMap
from .grid import GridSpec
from .pooling import DepthDistribution
from .sfa import SfaParams

_CHANNEL_TAGS = {CHANNEL_HEIGHT: 0, CHANNEL_DEPTH: 1}
_TAG_CHANNELS = {v: k for k, v in _CHANNEL_TAGS.items()}


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ParseError(f"truncated file while reading {what}")
    return data


def _expect_magic(f, magic: bytes, path) -> None:
    got = f.read(4)
    if got != magic:
        raise ParseError(
            f"{path}: bad magic {got!r}, expected {magic.decode()} file"
        )


def _read_f32(f, count: int, what: str) -> np.ndarray:
    raw = _read_exact(f, 4 * count, what)
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _write_f32(f, values: np.ndarray) -> None:
    f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


# -- point clouds -----------------------------------------------------------

def write_point_cloud(path, points) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "wb") as f:
        f.write(b"OCPC")
        f.write(struct.pack("<I", points.shape[0]))
        _write_f32(f, points)


def read_point_cloud(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCPC", path)
        (count,) = struct.unpack("<I", _read_exact(f, 4, "point count"))
        return _read_f32(f, count * 3, "points").reshape(count, 3)


# -- camera rig --------------------------------------------------------------

_RIG_KEYS = {"K": 9, "R_lc": 9, "t_lc": 3, "T_le": 16, "width": 1, "height": 1}


def write_camera_rig(path, rig: CameraRig) -> None:
    def fmt(values) -> str:
        return " ".join(repr(float(v)) for v in np.asarray(values).ravel())

    lines = [
        f"K={fmt(rig.K)}",
        f"R_lc={fmt(rig.R_lc)}",
        f"t_lc={fmt(rig.t_lc)}",
        f"T_le={fmt(rig.T_le)}",
        f"width={rig.image_width}",
        f"height={rig.image_height}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_camera_rig(path) -> CameraRig:
    entries: dict[str, list[float]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _RIG_KEYS:
            raise ParseError(f"{path}:{lineno}: unrecognized rig line {line!r}")
        try:
            entries[key] = [float(v) for v in value.split()]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad number in {line!r}") from exc
    for key, count in _RIG_KEYS.items():
        if key not in entries:
            raise ParseError(f"{path}: missing rig key {key!r}")
        if len(entries[key]) != count:
            raise ParseError(
                f"{path}: key {key!r} needs {count} values, got {len(entries[key])}"
            )
    try:
        return CameraRig(
            K=np.array(entries["K"]).reshape(3, 3),
            R_lc=np.array(entries["R_lc"]).reshape(3, 3),
            t_lc=np.array(entries["t_lc"]),
            T_le=np.array(entries["T_le"]).reshape(4, 4),
            image_width=int(entries["width"][0]),
            image_height=int(entries["height"][0]),
        )
    except ValueError as exc:
        raise ParseError(f"{path}: invalid rig: {exc}") from exc


# -- scalar maps --------------------------------------------------------------

def write_scalar_map(path, smap: ScalarMap) -> None:
    with open(path, "wb") as f:
        f.write(b"OCSM")
        f.write(struct.pack("<IIB", smap.width, smap.height, _CHANNEL_TAGS[smap.channel]))
        _write_f32(f, np.where(smap.valid, smap.values, np.nan))


def read_scalar_map(path) -> ScalarMap:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCSM", path)
        width, height, tag = struct.unpack("<IIB", _read_exact(f, 9, "map header"))
        if tag not in _TAG_CHANNELS:
            raise ParseError(f"{path}: unknown channel tag {tag}")
        values = _read_f32(f, width * height, "map values").reshape(height, width)
    valid = np.isfinite(values)
    return ScalarMap(values=values, valid=valid, channel=_TAG_CHANNELS[tag])


# -- height volumes ------------------------------------------------------------

def write_height_volume(path, volume: np.ndarray) -> None:
    volume = np.asarray(volume)
    bins, height, width = volume.shape
    with open(path, "wb") as f:
        f.write(b"OCHV")
        f.write(struct.pack("<III", width, height, bins))
        _write_f32(f, volume)


def read_height_volume(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCHV", path)
        width, height, bins = struct.unpack("<III", _read_exact(f, 12, "volume header"))
        return _read_f32(f, bins * height * width, "volume").reshape(bins, height, width)


# -- feature maps ---------------------------------------------------------------

def write_feature_map(path, fmap: np.ndarray) -> None:
    fmap = np.asarray(fmap)
    with open(path, "wb") as f:
        f.write(b"OCFM")
        f.write(struct.pack("<III", *fmap.shape))
        _write_f32(f, fmap)


def read_feature_map(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCFM", path)
        c, h, w = struct.unpack("<III", _read_exact(f, 12, "feature header"))
        return _read_f32(f, c * h * w, "features").reshape(c, h, w)


# -- depth distributions ---------------------------------------------------------

def write_depth_distribution(path, depth: DepthDistribution) -> None:
    with open(path, "wb") as f:
        f.write(b"OCDD")
        f.write(struct.pack("<III", depth.bins, depth.height, depth.width))
        f.write(struct.pack("<ff", depth.d_min, depth.d_step))
        _write_f32(f, depth.weights)


def read_depth_distribution(path) -> DepthDistribution:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCDD", path)
        bins, h, w = struct.unpack("<III", _read_exact(f, 12, "depth header"))
        d_min, d_step = struct.unpack("<ff", _read_exact(f, 8, "depth range"))
        weights = _read_f32(f, bins * h * w, "depth weights").reshape(bins, h, w)
    return DepthDistribution(d_min=float(d_min), d_step=float(d_step), weights=weights)


# -- feature volumes ---------------------------------------------------------------

def write_feature_volume(path, volume: np.ndarray) -> None:
    volume = np.asarray(volume)
    with open(path, "wb") as f:
        f.write(b"OCFV")
        f.write(struct.pack("<IIII", *volume.shape))
        _write_f32(f, volume)


def read_feature_volume(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCFV", path)
        c, nz, ny, nx = struct.unpack("<IIII", _read_exact(f, 16, "volume header"))
        return _read_f32(f, c * nz * ny * nx, "volume").reshape(c, nz, ny, nx)


# -- labeled voxel grids -------------------------------------------------------------

def write_voxel_grid(path, grid: LabeledVoxelGrid) -> None:
    with open(path, "wb") as f:
        f.write(b"OCVG")
        f.write(struct.pack("<III", *grid.spec.shape))
        f.write(struct.pack("<BB", grid.free_label, grid.spec.num_classes))
        f.write(np.ascontiguousarray(grid.labels, dtype=np.uint8).tobytes())


def read_voxel_grid(path, spec: GridSpec | None = None) -> LabeledVoxelGrid:
    """Load an OCVG file.

    The file stores only voxel counts; metric ranges come from `spec` when
    given, otherwise from GridSpec.for_dims defaults.
    """
    with open(path, "rb") as f:
        _expect_magic(f, b"OCVG", path)
        nx, ny, nz = struct.unpack("<III", _read_exact(f, 12, "grid header"))
        free_label, num_classes = struct.unpack("<BB", _read_exact(f, 2, "grid labels"))
        raw = _read_exact(f, nx * ny * nz, "grid data")
    labels = np.frombuffer(raw, dtype=np.uint8).reshape(nx, ny, nz)
    if spec is None:
        spec = GridSpec.for_dims(nx, ny, nz, num_classes=num_classes)
    return LabeledVoxelGrid(spec=spec, labels=labels.copy(), free_label=free_label)


# -- fusion parameters ------------------------------------------------------------------

def write_sfa_params(path, params: SfaParams) -> None:
    with open(path, "wb") as f:
        f.write(b"OCSP")
        f.write(struct.pack("<II", params.channels, params.reduction))
        _write_f32(f, params.to_vector())


def read_sfa_params(path) -> SfaParams:
    with open(path, "rb") as f:
        _expect_magic(f, b"OCSP", path)
        channels, reduction = struct.unpack("<II", _read_exact(f, 8, "params header"))
        template = SfaParams.zeros(channels, reduction)
        vec = _read_f32(f, template.to_vector().size, "params")
    return template.from_vector(vec)
