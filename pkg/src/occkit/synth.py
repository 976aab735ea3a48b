"""Synthetic labeled-grid generator for desk-scale experiments.

A recipe is key=value text; `profile` lines may repeat, one per class
behavior:

    seed=42
    count=2
    num_objects=30
    nx=16
    ny=16
    nz=16
    voxel_size=0.4
    num_classes=5
    profile=1:1-4:2-5     # class id : height-bin range : footprint range

Each object picks a profile, a square footprint and a height sub-range
inside the profile's bins, then stamps its class id into the grid. The
same seed always yields byte-identical grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import LabeledVoxelGrid
from .errors import ParseError
from .grid import GridSpec


@dataclass(frozen=True)
class ClassProfile:
    """One class's placement rule: height bins [z_lo, z_hi], square
    footprints with side in [f_min, f_max]."""

    class_id: int
    z_lo: int
    z_hi: int
    f_min: int
    f_max: int


@dataclass(frozen=True)
class SceneRecipe:
    seed: int
    count: int
    num_objects: int
    grid: GridSpec
    free_label: int
    profiles: tuple[ClassProfile, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        nx, ny, nz = self.grid.shape
        for p in self.profiles:
            if not (1 <= p.z_lo <= p.z_hi <= nz):
                raise ValueError(
                    f"profile class {p.class_id}: bins [{p.z_lo}, {p.z_hi}] "
                    f"outside [1, {nz}]"
                )
            if not (1 <= p.f_min <= p.f_max <= min(nx, ny)):
                raise ValueError(
                    f"profile class {p.class_id}: footprint range "
                    f"[{p.f_min}, {p.f_max}] does not fit the grid"
                )
            if not (0 <= p.class_id < self.grid.num_classes):
                raise ValueError(f"profile class {p.class_id} out of range")

    def generate(self) -> list[LabeledVoxelGrid]:
        rng = np.random.default_rng(self.seed)
        nx, ny, nz = self.grid.shape
        grids = []
        for _ in range(self.count):
            labels = np.full((nx, ny, nz), self.free_label, dtype=np.uint8)
            if self.profiles:
                for _ in range(self.num_objects):
                    p = self.profiles[int(rng.integers(0, len(self.profiles)))]
                    side = int(rng.integers(p.f_min, p.f_max + 1))
                    x0 = int(rng.integers(0, nx - side + 1))
                    y0 = int(rng.integers(0, ny - side + 1))
                    z0 = int(rng.integers(p.z_lo, p.z_hi + 1))
                    z1 = int(rng.integers(z0, p.z_hi + 1))
                    labels[x0 : x0 + side, y0 : y0 + side, z0 - 1 : z1] = p.class_id
            grids.append(
                LabeledVoxelGrid(spec=self.grid, labels=labels, free_label=self.free_label)
            )
        return grids


def _parse_profile(value: str) -> ClassProfile:
    try:
        cls_part, z_part, f_part = value.split(":")
        z_lo, z_hi = (int(x) for x in z_part.split("-"))
        f_min, f_max = (int(x) for x in f_part.split("-"))
        return ClassProfile(int(cls_part), z_lo, z_hi, f_min, f_max)
    except ValueError as exc:
        raise ParseError(f"bad profile {value!r}, want class:lo-hi:min-max") from exc


def parse_recipe(text: str, source: str = "<recipe>") -> SceneRecipe:
    scalars = {
        "seed": 0,
        "count": 1,
        "num_objects": 0,
        "nx": 16,
        "ny": 16,
        "nz": 16,
        "num_classes": 17,
        "free_label": -1,
    }
    voxel_size = 0.4
    profiles: list[ClassProfile] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ParseError(f"{source}:{lineno}: expected key=value, got {line!r}")
        if key == "profile":
            profiles.append(_parse_profile(value))
        elif key == "voxel_size":
            voxel_size = float(value)
        elif key in scalars:
            try:
                scalars[key] = int(value)
            except ValueError as exc:
                raise ParseError(f"{source}:{lineno}: {key} must be an integer") from exc
        else:
            raise ParseError(f"{source}:{lineno}: unknown recipe key {key!r}")

    grid = GridSpec.for_dims(
        scalars["nx"],
        scalars["ny"],
        scalars["nz"],
        voxel_size=voxel_size,
        num_classes=scalars["num_classes"],
    )
    free = scalars["free_label"] if scalars["free_label"] >= 0 else grid.num_classes
    try:
        return SceneRecipe(
            seed=scalars["seed"],
            count=scalars["count"],
            num_objects=scalars["num_objects"],
            grid=grid,
            free_label=free,
            profiles=tuple(profiles),
        )
    except ValueError as exc:
        raise ParseError(f"{source}: invalid recipe: {exc}") from exc
