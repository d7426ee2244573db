"""Transfer 2D prediction rasters back onto the 3D points.

Each point receives the predicted class of its pixel, located through
the absolute window origins stored at projection time. With the default
stride every in-bounds point is labeled exactly once; with overlapping
windows the smallest window_id wins. Points outside every window (only
possible when the cloud differs from the projection input) are labeled
255 and counted, never dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .bundles import Manifest, read_manifest
from .pointcloud import UNLABELED
from .projection import Tiling, WindowMeta, build_tiling, _iter_chunks


@dataclass
class CoverageReport:
    total_points: int
    labeled: int  # received a class id in [0, 12]
    unpredicted: int  # pixel held 255
    outside_windows: int  # not covered by any window; 0 for full tilings

    def to_dict(self) -> dict:
        return {
            "total_points": self.total_points,
            "labeled": self.labeled,
            "unpredicted": self.unpredicted,
            "outside_windows": self.outside_windows,
        }


def remap_window(pred: np.ndarray, meta: WindowMeta, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Labels for points known to lie in the window.

    Points exactly on the window's far edge clamp to the last pixel; that
    can only be the bounding-box maximum when callers bin correctly.
    """
    pred = np.asarray(pred)
    if pred.shape != (meta.height_px, meta.width_px):
        raise ValueError(
            f"prediction raster for {meta.name} is {pred.shape[0]}x{pred.shape[1]}, "
            f"expected {meta.height_px}x{meta.width_px}"
        )
    px = np.floor((np.asarray(x) - meta.x_s) / meta.g_scale).astype(np.int64)
    py = np.floor((np.asarray(y) - meta.y_s) / meta.g_scale).astype(np.int64)
    if ((px < 0) | (px > meta.width_px) | (py < 0) | (py > meta.height_px)).any():
        raise ValueError(f"point does not quantize into window {meta.name}")
    np.clip(px, 0, meta.width_px - 1, out=px)
    np.clip(py, 0, meta.height_px - 1, out=py)
    return pred[py, px]


def load_prediction(pred_dir: str | Path, meta: WindowMeta) -> np.ndarray:
    path = Path(pred_dir) / f"{meta.name}_label.png"
    if not path.exists():
        raise FileNotFoundError(f"missing prediction raster for window {meta.name}: {path}")
    pred = np.asarray(Image.open(path), np.uint8)
    if pred.shape != (meta.height_px, meta.width_px):
        raise ValueError(
            f"prediction raster for {meta.name} is {pred.shape[0]}x{pred.shape[1]}, "
            f"expected {meta.height_px}x{meta.width_px}"
        )
    return pred


def remap(
    manifest: Manifest | str | Path,
    pred_dir: str | Path,
    source,
) -> tuple[np.ndarray, CoverageReport]:
    """Label every point of ``source`` from the prediction rasters.

    ``manifest`` may be a Manifest or a bundle directory containing one.
    Returns the per-point label vector in point-index order plus coverage
    counts.
    """
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    if manifest.bounds is None or not manifest.windows:
        raise ValueError("manifest describes an empty projection; nothing to remap")
    tiling = build_tiling(manifest.bounds, manifest.config)
    _check_manifest_matches(manifest, tiling)

    b = manifest.bounds
    assignments: dict[int, list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = {}
    total = 0
    outside = 0
    outside_rows: list[np.ndarray] = []
    for chunk in _iter_chunks(source):
        if len(chunk) == 0:
            continue
        total += len(chunk)
        x, y = chunk.xyz[:, 0], chunk.xyz[:, 1]
        in_bounds = (x >= b.x_min) & (x <= b.x_max) & (y >= b.y_min) & (y <= b.y_max)
        if not in_bounds.all():
            outside += int((~in_bounds).sum())
            outside_rows.append(chunk.index[~in_bounds])
        if not in_bounds.any():
            continue
        win, px, py = tiling.assign_owner(x[in_bounds], y[in_bounds])
        idx = chunk.index[in_bounds]
        order = np.argsort(win, kind="stable")
        win_sorted = win[order]
        starts = np.flatnonzero(np.r_[True, win_sorted[1:] != win_sorted[:-1]])
        ends = np.r_[starts[1:], len(win_sorted)]
        for s, e in zip(starts, ends):
            rows = order[s:e]
            assignments.setdefault(int(win_sorted[s]), []).append((idx[rows], px[rows], py[rows]))

    labels = np.full(total, UNLABELED, np.uint8)
    by_id = {m.window_id: m for m in manifest.windows}
    for window_id in sorted(assignments):
        meta = by_id[window_id]
        pred = load_prediction(pred_dir, meta)
        for idx, px, py in assignments[window_id]:
            labels[idx] = pred[py, px]

    unpredicted = int((labels == UNLABELED).sum()) - outside
    report = CoverageReport(
        total_points=total,
        labeled=total - unpredicted - outside,
        unpredicted=unpredicted,
        outside_windows=outside,
    )
    return labels, report


def _check_manifest_matches(manifest: Manifest, tiling: Tiling) -> None:
    if len(manifest.windows) != len(tiling.windows):
        raise ValueError(
            f"manifest lists {len(manifest.windows)} windows but the config tiles "
            f"the bounds into {len(tiling.windows)}"
        )
    for recorded, rebuilt in zip(manifest.windows, tiling.windows):
        if (
            recorded.window_id != rebuilt.window_id
            or recorded.x_s != rebuilt.x_s
            or recorded.y_s != rebuilt.y_s
        ):
            raise ValueError(f"manifest window {recorded.name} does not match the rebuilt tiling")


def write_coverage(path: str | Path, report: CoverageReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
