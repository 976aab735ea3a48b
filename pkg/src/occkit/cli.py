"""Command-line interface.

Subcommands: gen-heightmap, project, entropy, histogram, cdf, sfa-check,
eval, loss, synth. Exit codes: 0 success, 2 usage, 3 unreadable or
inconsistent inputs, 4 numeric failure (including empty data and a failed
gradient-check tolerance).

Every command is deterministic for fixed inputs and flags; --threads (or
the OCC_THREADS variable) only splits independent work, so outputs are
byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, fileio, geometry, losses, metrics, pooling, sfa, synth
from ._threads import resolve_threads
from .analysis import format_sig
from .errors import (
    DimensionError,
    EmptyDataError,
    NumericError,
    OccError,
    ParseError,
)
from .grid import GridSpec, bin_heights
from .pooling import DecouplingScheme


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("voxel grid (defaults: Occ3D-nuScenes)")
    g.add_argument("--xmin", type=float, default=-40.0)
    g.add_argument("--xmax", type=float, default=40.0)
    g.add_argument("--ymin", type=float, default=-40.0)
    g.add_argument("--ymax", type=float, default=40.0)
    g.add_argument("--zmin", type=float, default=-1.0)
    g.add_argument("--zmax", type=float, default=5.4)
    g.add_argument("--voxel-size", type=float, default=0.4)
    g.add_argument("--num-classes", type=int, default=17)


def _grid_from_args(args) -> GridSpec:
    return GridSpec(
        x_range=(args.xmin, args.xmax),
        y_range=(args.ymin, args.ymax),
        z_range=(args.zmin, args.zmax),
        voxel_size=args.voxel_size,
        num_classes=args.num_classes,
    )


def _emit(text: str, csv_path: str | None) -> None:
    if csv_path is None:
        sys.stdout.write(text)
    else:
        Path(csv_path).write_text(text)


def _load_grids(directory: str):
    paths = sorted(Path(directory).glob("*.ocvg"))
    if not paths:
        raise EmptyDataError(f"no .ocvg grids under {directory}")
    return [fileio.read_voxel_grid(p) for p in paths]


def cmd_gen_heightmap(args) -> int:
    cloud = fileio.read_point_cloud(args.points)
    rig = fileio.read_camera_rig(args.rig)
    projected = geometry.project_points(cloud, rig)
    smap = geometry.zbuffer_map(
        projected, rig.image_width, rig.image_height, channel=args.channel
    )
    fileio.write_scalar_map(args.out, smap)
    return 0


def cmd_project(args) -> int:
    threads = resolve_threads(args.threads)
    spec = _grid_from_args(args)
    ctx = fileio.read_feature_map(args.features)
    depth = fileio.read_depth_distribution(args.depth)
    rig = fileio.read_camera_rig(args.rig)

    if args.mode in ("bev", "voxel"):
        frustum = pooling.gen_frustum(ctx, depth, rig, spec)
        pool = pooling.bev_pool if args.mode == "bev" else pooling.voxel_pool
        fileio.write_feature_volume(args.out, pool(frustum, ctx, spec, threads))
        return 0

    if args.heightmap is None or args.scheme is None:
        raise ParseError("mghs mode needs --heightmap and --scheme")
    h_map = fileio.read_scalar_map(args.heightmap)
    if args.heightmap_units == "meters":
        h_map = bin_heights(h_map, spec)
    scheme = DecouplingScheme.parse(args.scheme)
    volumes = pooling.mghs_project(ctx, depth, h_map, scheme, rig, spec, threads)

    manifest = ["interval,lo,hi,file"]
    for k, ((lo, hi), vol) in enumerate(zip(scheme.intervals, volumes)):
        part = f"{args.out}.interval{k}.ocfv"
        fileio.write_feature_volume(part, vol)
        manifest.append(f"{k},{lo},{hi},{Path(part).name}")
    Path(f"{args.out}.manifest.csv").write_text("\n".join(manifest) + "\n")
    return 0


def cmd_entropy(args) -> int:
    threads = resolve_threads(args.threads)
    grids = _load_grids(args.grids)
    rows = []
    for text in args.scheme:
        scheme = DecouplingScheme.parse(text)
        rows.append((scheme, analysis.weighted_entropy(grids, scheme, threads)))
    _emit(analysis.entropy_csv(rows), args.csv)
    return 0


def cmd_histogram(args) -> int:
    threads = resolve_threads(args.threads)
    hist = analysis.class_height_histogram(_load_grids(args.grids), threads)
    _emit(analysis.histogram_csv(hist), args.csv)
    return 0


def cmd_cdf(args) -> int:
    threads = resolve_threads(args.threads)
    hist = analysis.class_height_histogram(_load_grids(args.grids), threads)
    _emit(analysis.cdf_csv(analysis.height_cdf(hist)), args.csv)
    return 0


def cmd_sfa_check(args) -> int:
    lines = ["seed,max_rel_error"]
    worst = 0.0
    for seed in range(args.seeds):
        f_db, f_hr, params = sfa.make_check_case(
            args.channels, args.size, args.reduction,
            seed=args.seed_base + seed, step=args.step,
        )
        err = sfa.grad_check(f_db, f_hr, params, step=args.step)
        worst = max(worst, err)
        lines.append(f"{seed},{format_sig(err)}")
    _emit("\n".join(lines) + "\n", args.csv)
    if worst > args.tol:
        raise NumericError(
            f"gradient check failed: max relative error {worst:.3e} > {args.tol:.3e}"
        )
    return 0


def cmd_eval(args) -> int:
    pred = fileio.read_voxel_grid(args.pred)
    gt = fileio.read_voxel_grid(args.gt)
    ious, mean = metrics.miou(pred, gt)
    lines = ["label,iou"]
    for j, value in enumerate(ious):
        lines.append(f"{j},{format_sig(value)}")
    lines.append(f"miou,{format_sig(mean)}")
    _emit("\n".join(lines) + "\n", args.csv)
    return 0


_LOSS_PARTS = ("bce_depth", "bce_height", "ce", "scal_sem", "scal_geo")


def cmd_loss(args) -> int:
    values = {name: 0.0 for name in _LOSS_PARTS}
    lambdas = list(losses.DEFAULT_LAMBDAS)
    depth_supervision = True
    for lineno, line in enumerate(Path(args.config).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ParseError(f"{args.config}:{lineno}: expected key=value")
        if key in values:
            values[key] = float(value)
        elif key.startswith("lambda") and key[6:] in "12345" and len(key) == 7:
            lambdas[int(key[6]) - 1] = float(value)
        elif key == "depth_supervision":
            depth_supervision = value.lower() in ("1", "true", "yes")
        else:
            raise ParseError(f"{args.config}:{lineno}: unknown loss key {key!r}")

    breakdown = losses.total_loss(
        *(values[name] for name in _LOSS_PARTS),
        lambdas=tuple(lambdas),
        depth_supervision=depth_supervision,
    )
    lines = ["component,lambda,value,weighted"]
    for name, lam in zip(_LOSS_PARTS, breakdown.lambdas):
        part = getattr(breakdown, name)
        lines.append(
            f"{name},{format_sig(lam)},{format_sig(part)},{format_sig(lam * part)}"
        )
    lines.append(f"total,,,{format_sig(breakdown.total)}")
    _emit("\n".join(lines) + "\n", args.csv)
    return 0


def cmd_synth(args) -> int:
    recipe = synth.parse_recipe(Path(args.recipe).read_text(), source=args.recipe)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, grid in enumerate(recipe.generate()):
        fileio.write_voxel_grid(out_dir / f"grid_{i:03d}.ocvg", grid)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occ",
        description="Height-aware 2D-to-3D projection, entropy analysis and "
        "occupancy losses over simple binary file formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads (default: $OCC_THREADS or 1); results do not "
            "depend on this",
        )
        return p

    p = add("gen-heightmap", cmd_gen_heightmap, "project a cloud to a z-buffered map")
    p.add_argument("--points", required=True, help="OCPC point cloud")
    p.add_argument("--rig", required=True, help="camera rig text file")
    p.add_argument("--out", required=True, help="output OCSM map")
    p.add_argument("--channel", choices=("height", "depth"), default="height")

    p = add("project", cmd_project, "lift image features into a voxel/BEV grid")
    p.add_argument("--mode", choices=("bev", "voxel", "mghs"), required=True)
    p.add_argument("--features", required=True, help="OCFM context features")
    p.add_argument("--depth", required=True, help="OCDD depth distribution")
    p.add_argument("--rig", required=True)
    p.add_argument("--out", required=True, help="OCFV output (prefix for mghs)")
    p.add_argument("--heightmap", help="bin-valued OCSM map (mghs only)")
    p.add_argument("--scheme", help='height intervals, e.g. "1-4,5-8,9-16"')
    p.add_argument(
        "--heightmap-units",
        choices=("bins", "meters"),
        default="bins",
        help="convert a metric height map to bins first",
    )
    _add_grid_args(p)

    p = add("entropy", cmd_entropy, "weighted entropy of decoupling schemes")
    p.add_argument("--grids", required=True, help="directory of .ocvg grids")
    p.add_argument("--scheme", action="append", required=True)
    p.add_argument("--csv", help="output CSV (default: stdout)")

    p = add("histogram", cmd_histogram, "class-by-height occupancy counts")
    p.add_argument("--grids", required=True)
    p.add_argument("--csv")

    p = add("cdf", cmd_cdf, "cumulative height distribution of occupancy")
    p.add_argument("--grids", required=True)
    p.add_argument("--csv")

    p = add("sfa-check", cmd_sfa_check, "finite-difference check of fusion gradients")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--reduction", type=int, default=4)
    p.add_argument("--step", type=float, default=sfa.FD_STEP)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed-base", type=int, default=2024)
    p.add_argument("--csv")

    p = add("eval", cmd_eval, "per-class IoU and mIoU of two label grids")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--csv")

    p = add("loss", cmd_loss, "weighted total loss from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--csv")

    p = add("synth", cmd_synth, "generate labeled grids from a recipe")
    p.add_argument("--recipe", required=True)
    p.add_argument("--out-dir", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DimensionError, OSError) as exc:
        print(f"occ {args.command}: {exc}", file=sys.stderr)
        return 3
    except (NumericError, EmptyDataError) as exc:
        print(f"occ {args.command}: {exc}", file=sys.stderr)
        return 4
    except OccError as exc:
        print(f"occ {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
