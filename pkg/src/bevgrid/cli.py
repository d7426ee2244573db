"""Command-line front end for the projection/analysis/evaluation pipeline.

Subcommands: synth, project, complete, remap, analyze, evaluate, weights,
plot, and pipeline (project -> complete -> segment -> remap -> evaluate).
Every run writes a run.json echoing the resolved configuration. Handled
errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import shutil
import subprocess
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, analysis, bundles, metrics, remapping, synthetic
from .config import PipelineConfig
from .pointcloud import (
    MAGIC,
    UNLABELED,
    read_labels,
    read_points,
    write_labels,
    write_points,
)
from .projection import DEFAULT_MAX_WINDOW_PIXELS


def _default_jobs() -> int:
    env = os.environ.get("BEVGRID_JOBS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_projection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=float, dest="g_scale", help="meters per pixel")
    p.add_argument("--size", type=float, dest="g_size", help="window side in meters")
    p.add_argument("--step", type=float, dest="g_step", help="window stride in meters")
    p.add_argument("--cell-side", type=float, dest="cell_side", help="grid cell side in meters")


def _add_completion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, dest="completion_iterations")
    p.add_argument("--kernel", type=int, dest="kernel")
    p.add_argument("--label-strategy", choices=("majority", "max-id"), dest="label_strategy")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--jobs", type=int, help="worker parallelism (env BEVGRID_JOBS)")


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file values overridden by explicitly passed flags."""
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    for f in fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, tuple(v) if isinstance(v, list) else v)
    if getattr(args, "jobs", None) is None and cfg.jobs == 1:
        cfg.jobs = _default_jobs()
    cfg.validate()
    return cfg


def write_run_record(out_dir: Path, command: str, cfg: PipelineConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {"tool": "bevgrid", "version": __version__, "command": command, "config": cfg.to_dict()}
    with open(out_dir / "run.json", "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
        f.write("\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _load_gt_labels(path: str) -> np.ndarray:
    """Ground truth from a point file (sniffed by magic) or a raw label file."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == MAGIC:
        return read_points(path).label
    return read_labels(path)


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    if args.spec:
        with open(args.spec, encoding="utf-8") as f:
            spec = synthetic.spec_from_dict(json.load(f))
    elif args.single_layer:
        spec = synthetic.single_layer_spec(rng_seed=cfg.rng_seed)
    else:
        spec = synthetic.random_scene_spec(cfg.rng_seed, max_points=args.max_points)
    cloud = synthetic.generate_city(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_points(out, cloud)
    cfg.output = str(out)
    write_run_record(out.parent, "synth", cfg)
    print(f"wrote {len(cloud)} points to {out}")
    return 0


def cmd_project(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    cfg.input, cfg.output = args.input, str(out_dir)
    write_run_record(out_dir, "project", cfg)
    manifest = bundles.project_to_dir(
        args.input, cfg.projection(), out_dir, jobs=cfg.jobs, max_window_pixels=args.max_window_pixels
    )
    print(f"wrote {len(manifest.windows)} window bundles to {out_dir}")
    return 0


def cmd_complete(args) -> int:
    cfg = resolve_config(args)
    target, manifest = bundles.complete_dir(
        args.bundles,
        out_dir=args.out,
        iterations=cfg.completion_iterations,
        kernel=cfg.kernel,
        label_strategy=cfg.label_strategy,
        in_place=args.in_place,
        jobs=cfg.jobs,
    )
    cfg.input, cfg.output = args.bundles, str(target)
    write_run_record(Path(target), "complete", cfg)
    print(f"completed {len(manifest.windows)} bundles into {target}")
    return 0


def cmd_remap(args) -> int:
    cfg = resolve_config(args)
    labels, report = remapping.remap(args.bundles, args.pred, args.input)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labels(out, labels)
    remapping.write_coverage(out.with_name("coverage.json"), report)
    cfg.input, cfg.output = args.input, str(out)
    write_run_record(out.parent, "remap", cfg)
    print(
        f"remapped {report.total_points} points "
        f"({report.labeled} labeled, {report.unpredicted} unpredicted, "
        f"{report.outside_windows} outside windows)"
    )
    return 0


def cmd_analyze(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    cfg.input, cfg.output = args.input, str(out_dir)
    write_run_record(out_dir, "analyze", cfg)
    cloud = read_points(args.input)
    stats = [
        analysis.spatial_overlap(cloud, scale, cell_size=args.cell_size)
        for scale in cfg.probe_scales
    ]
    analysis.write_overlap_csv(out_dir / "overlap.csv", stats)
    overlap = analysis.class_overlap(cloud, cfg.projection(), denominator=args.overlap_denominator)
    analysis.write_class_overlap_json(out_dir / "class_overlap.json", overlap)
    oracle = analysis.oracle_bound(cloud, cfg.projection())
    _write_json(out_dir / "oracle.json", oracle.to_dict())
    for s in stats:
        print(f"scale {s.probe_scale:g}: spatial overlap {s.ratio:.4%}")
    print(f"class overlap {overlap.ratio:.4%}, oracle mIoU {oracle.miou:.4f}")
    if args.plot:
        _plot_overlap(out_dir / "overlap.csv", Path(args.plot))
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    gt = _load_gt_labels(args.gt)
    pred = read_labels(args.pred)
    if len(gt) != len(pred):
        raise ValueError(
            f"label vectors differ in length: gt has {len(gt)}, pred has {len(pred)}"
        )
    summary = metrics.evaluate_labels(gt, pred)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, summary.to_dict())
    cfg.input, cfg.output = args.pred, str(out)
    write_run_record(out.parent, "evaluate", cfg)
    print(f"OA {summary.oa:.4f}  mAcc {summary.macc:.4f}  mIoU {summary.miou:.4f}")
    return 0


def cmd_weights(args) -> int:
    cfg = resolve_config(args)
    cloud = read_points(args.input)
    hist = metrics.label_histogram(cloud.label)
    weights = metrics.class_weights(hist, offset=args.offset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    from .pointcloud import CLASS_NAMES

    _write_json(
        out,
        {
            "offset": args.offset,
            "histogram": {name: int(c) for name, c in zip(CLASS_NAMES, hist)},
            "weights": {name: float(w) for name, w in zip(CLASS_NAMES, weights)},
        },
    )
    cfg.input, cfg.output = args.input, str(out)
    write_run_record(out.parent, "weights", cfg)
    print(f"wrote weights for {int(hist.sum())} labeled points to {out}")
    return 0


def _plot_overlap(csv_path: Path, out_path: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise ValueError("plotting requires matplotlib (pip install bevgrid[plot])") from e
    import csv as csv_mod

    with open(csv_path, newline="", encoding="utf-8") as f:
        rows = list(csv_mod.reader(f))
    header, data = rows[0], rows[1:]
    x = [float(r[0]) for r in data]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col in range(1, len(header)):
        ax.plot(x, [float(r[col]) for r in data if r[col]], label=header[col])
    ax.set_xlabel("cell rank percentile (0 = densest)")
    ax.set_ylabel("overlap ratio")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def cmd_plot(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _plot_overlap(Path(args.overlap), out)
    cfg.input, cfg.output = args.overlap, str(out)
    write_run_record(out.parent, "plot", cfg)
    print(f"wrote {args.out}")
    return 0


def _run_segmenter(command: str, in_dir: Path, out_dir: Path) -> None:
    argv = shlex.split(command) + [str(in_dir), str(out_dir)]
    result = subprocess.run(argv)
    if result.returncode != 0:
        raise ValueError(f"segmenter command failed with status {result.returncode}: {command}")


def _oracle_predictions(bundle_dir: Path, pred_dir: Path) -> None:
    """Ground-truth passthrough: the bundle label rasters become predictions."""
    pred_dir.mkdir(parents=True, exist_ok=True)
    for label_png in sorted(bundle_dir.glob("*_label.png")):
        shutil.copyfile(label_png, pred_dir / label_png.name)


def cmd_pipeline(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    cfg.input, cfg.output = args.input, str(out_dir)
    write_run_record(out_dir, "pipeline", cfg)

    bundle_dir = out_dir / "bundles"
    manifest = bundles.project_to_dir(args.input, cfg.projection(), bundle_dir, jobs=cfg.jobs)
    if not manifest.windows:
        raise ValueError("input cloud is empty; nothing to segment")

    if cfg.completion_iterations > 0:
        seg_input, _ = bundles.complete_dir(
            bundle_dir,
            out_dir=out_dir / "completed",
            iterations=cfg.completion_iterations,
            kernel=cfg.kernel,
            label_strategy=cfg.label_strategy,
            jobs=cfg.jobs,
        )
    else:
        seg_input = bundle_dir

    pred_dir = out_dir / "pred"
    if args.oracle:
        _oracle_predictions(Path(seg_input), pred_dir)
    else:
        pred_dir.mkdir(parents=True, exist_ok=True)
        _run_segmenter(args.segmenter, Path(seg_input), pred_dir)

    labels, report = remapping.remap(manifest, pred_dir, args.input)
    write_labels(out_dir / "labels.bin", labels)
    remapping.write_coverage(out_dir / "coverage.json", report)

    gt = read_points(args.input).label
    summary = metrics.evaluate_labels(gt, labels)
    _write_json(out_dir / "metrics.json", summary.to_dict())
    print(
        f"pipeline done: OA {summary.oa:.4f}  mAcc {summary.macc:.4f}  "
        f"mIoU {summary.miou:.4f} ({report.total_points} points)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bevgrid",
        description="Project point clouds to bird's-eye-view rasters, complete, remap, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"bevgrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene point file")
    p.add_argument("--spec", help="scene spec JSON file")
    p.add_argument("--seed", type=int, dest="rng_seed", help="seed for --single-layer / random scenes")
    p.add_argument("--single-layer", action="store_true", help="lossless calibration scene")
    p.add_argument("--max-points", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("project", help="rasterize a cloud into window bundles")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-window-pixels", type=int, default=DEFAULT_MAX_WINDOW_PIXELS)
    _add_projection_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("complete", help="fill nodata pixels in existing bundles")
    p.add_argument("--bundles", required=True)
    p.add_argument("--out", help="output directory (default: <bundles>_c)")
    p.add_argument("--in-place", action="store_true", help="overwrite the input bundles")
    _add_completion_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("remap", help="transfer prediction rasters onto the 3D points")
    p.add_argument("--bundles", required=True, help="directory holding manifest.json")
    p.add_argument("--pred", required=True, help="directory of *_label.png predictions")
    p.add_argument("--input", required=True, help="the projected point file")
    p.add_argument("--out", required=True, help="output label file")
    _add_common_flags(p)
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("analyze", help="projection loss statistics and the oracle ceiling")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probe-scales", type=float, nargs="+", dest="probe_scales")
    p.add_argument("--cell-size", type=float, default=analysis.DEFAULT_CELL_SIZE)
    p.add_argument("--overlap-denominator", choices=("all", "overlapped"), default="all")
    p.add_argument("--plot", help="also render the overlap curve to this PNG")
    _add_projection_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="score predicted labels against ground truth")
    p.add_argument("--gt", required=True, help="point file or label file")
    p.add_argument("--pred", required=True, help="label file")
    p.add_argument("--out", required=True, help="metrics JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("weights", help="log-inverse class weights from a labeled cloud")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--offset", type=float, default=1.02)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("plot", help="render an overlap.csv curve")
    p.add_argument("--overlap", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pipeline", help="project, complete, segment, remap, evaluate")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--oracle", action="store_true", help="ground-truth passthrough segmenter")
    group.add_argument("--segmenter", help="command run as: CMD <bundle_dir> <pred_dir>")
    _add_projection_flags(p)
    _add_completion_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
