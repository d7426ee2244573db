"""Quantify what the top-altitude projection loses.

Three views of the same question: the spatial overlap ratio (fraction of
points hidden below their pixel's winner, curved over density-ranked 1 m
cells), the class overlap ratio (hidden points whose class differs from
the winner's, the irreducible label-transfer error), and the oracle
ceiling (metrics of remapping ground-truth rasters, the best any 2D
segmenter can do through this projection).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import ConfusionMatrix, MetricsSummary, summarize
from .pointcloud import CLASS_NAMES, UNLABELED, PointCloud
from .projection import Bounds, ProjectionConfig, build_tiling, load_cloud

DEFAULT_PROBE_SCALES = (0.01, 0.02, 0.03, 0.04)
DEFAULT_CELL_SIZE = 1.0


def _winner_rows(keys: np.ndarray, z: np.ndarray, index: np.ndarray):
    """Row of the winning point per group key (max z, ties to lowest index).

    Returns (unique_keys, winner_rows) with unique_keys sorted ascending.
    """
    order = np.lexsort((index, -z, keys))
    keys_sorted = keys[order]
    first = np.r_[True, keys_sorted[1:] != keys_sorted[:-1]]
    return keys_sorted[first], order[first]


@dataclass
class OverlapStats:
    """Spatial overlap at one probe scale, plus the density-rank curve."""

    probe_scale: float
    cell_size: float
    total_points: int
    overlapped_points: int
    ratio: float
    cell_counts: np.ndarray  # per analysis cell, sorted by count descending
    cell_overlapped: np.ndarray  # aligned with cell_counts
    curve_percentiles: np.ndarray  # rank percentile of each curve bin (0 = densest)
    curve_ratios: np.ndarray


def spatial_overlap(
    source,
    probe_scale: float,
    cell_size: float = DEFAULT_CELL_SIZE,
    n_bins: int = 100,
) -> OverlapStats:
    """Fraction of points that lose their pixel at ``probe_scale``.

    Pixels are a single global grid anchored at the cloud minimum. Cells
    (1 m x 1 m by default) are ranked by point count descending and the
    overlap ratio is reported per rank-percentile bin.
    """
    if probe_scale <= 0:
        raise ValueError(f"probe_scale must be positive, got {probe_scale}")
    if cell_size <= 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    cloud = load_cloud(source)
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    x, y, z = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
    x0, y0 = float(x.min()), float(y.min())

    ix = np.floor((x - x0) / probe_scale).astype(np.int64)
    iy = np.floor((y - y0) / probe_scale).astype(np.int64)
    keys = ix * (iy.max() + 1) + iy
    unique_keys, winners = _winner_rows(keys, z, cloud.index)
    is_winner = np.zeros(len(cloud), bool)
    is_winner[winners] = True

    cx = np.floor((x - x0) / cell_size).astype(np.int64)
    cy = np.floor((y - y0) / cell_size).astype(np.int64)
    ckeys = cx * (cy.max() + 1) + cy
    _, inverse = np.unique(ckeys, return_inverse=True)
    counts = np.bincount(inverse)
    overlapped = np.bincount(inverse, weights=(~is_winner).astype(np.float64)).astype(np.int64)

    order = np.argsort(-counts, kind="stable")
    counts = counts[order]
    overlapped = overlapped[order]

    n_cells = len(counts)
    bins = min(n_bins, n_cells)
    edges = np.linspace(0, n_cells, bins + 1).astype(np.int64)
    percentiles = edges[:-1] / n_cells * 100.0
    ratios = np.empty(bins)
    for i in range(bins):
        c = counts[edges[i] : edges[i + 1]].sum()
        o = overlapped[edges[i] : edges[i + 1]].sum()
        ratios[i] = o / c if c else 0.0

    n_over = int((~is_winner).sum())
    return OverlapStats(
        probe_scale=probe_scale,
        cell_size=cell_size,
        total_points=len(cloud),
        overlapped_points=n_over,
        ratio=n_over / len(cloud),
        cell_counts=counts,
        cell_overlapped=overlapped,
        curve_percentiles=percentiles,
        curve_ratios=ratios,
    )


def _owner_winner_labels(cloud: PointCloud, config: ProjectionConfig):
    """Per point: its owner-window pixel's winning label, and whether the
    point is that winner.

    Winners are decided over every point covering a window, so the result
    agrees exactly with rasterizing and remapping.
    """
    x, y, z = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
    tiling = build_tiling(Bounds.of_cloud(cloud), config)
    side = config.pixels_per_side
    pixels = side * side

    cover_keys = []
    cover_rows = []
    for rows, win, px, py in tiling.iter_cover_assignments(x, y):
        cover_keys.append(win * pixels + py * side + px)
        cover_rows.append(rows)
    keys = np.concatenate(cover_keys)
    rows = np.concatenate(cover_rows)
    unique_keys, winner_pos = _winner_rows(keys, z[rows], cloud.index[rows])
    winner_rows = rows[winner_pos]

    win, px, py = tiling.assign_owner(x, y)
    owner_keys = win * pixels + py * side + px
    slot = np.searchsorted(unique_keys, owner_keys)
    winner_of = winner_rows[slot]
    return cloud.label[winner_of], winner_of == np.arange(len(cloud))


@dataclass
class ClassOverlapStats:
    ratio: float
    denominator: str  # "all" or "overlapped"
    total_points: int
    valid_points: int  # points where both own and winner label are known
    overlapped_points: int  # valid points that are not their pixel's winner
    disagreements: int
    pairs: dict[tuple[int, int], int]  # (winner class, hidden class) -> count

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "denominator": self.denominator,
            "total_points": self.total_points,
            "valid_points": self.valid_points,
            "overlapped_points": self.overlapped_points,
            "disagreements": self.disagreements,
            "pairs": [
                {
                    "winner": CLASS_NAMES[w],
                    "hidden": CLASS_NAMES[l],
                    "count": c,
                }
                for (w, l), c in sorted(self.pairs.items())
            ],
        }


def class_overlap(
    source, config: ProjectionConfig, denominator: str = "all"
) -> ClassOverlapStats:
    """Fraction of points whose class differs from their pixel winner's.

    Computed at the config's scale inside the config's windows. Pairs
    where either label is unknown (255) are excluded; the denominator is
    every valid point, or only the overlapped ones when requested.
    """
    if denominator not in ("all", "overlapped"):
        raise ValueError("denominator must be 'all' or 'overlapped'")
    cloud = load_cloud(source)
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if (cloud.label == UNLABELED).all():
        raise ValueError("cloud has no labeled points")
    winner_label, is_winner = _owner_winner_labels(cloud, config)
    valid = (cloud.label != UNLABELED) & (winner_label != UNLABELED)
    disagree = valid & (cloud.label != winner_label)
    overlapped = valid & ~is_winner

    pairs: dict[tuple[int, int], int] = {}
    if disagree.any():
        stacked = np.stack([winner_label[disagree], cloud.label[disagree]], axis=1)
        uniq, counts = np.unique(stacked, axis=0, return_counts=True)
        pairs = {(int(w), int(l)): int(c) for (w, l), c in zip(uniq, counts)}

    denom = int(valid.sum()) if denominator == "all" else int(overlapped.sum())
    return ClassOverlapStats(
        ratio=int(disagree.sum()) / denom if denom else 0.0,
        denominator=denominator,
        total_points=len(cloud),
        valid_points=int(valid.sum()),
        overlapped_points=int(overlapped.sum()),
        disagreements=int(disagree.sum()),
        pairs=pairs,
    )


def oracle_bound(source, config: ProjectionConfig) -> MetricsSummary:
    """Metrics of remapping ground-truth rasters: the 2D segmenter ceiling."""
    cloud = load_cloud(source)
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if (cloud.label == UNLABELED).all():
        raise ValueError("cloud has no labeled points")
    winner_label, _ = _owner_winner_labels(cloud, config)
    return summarize(ConfusionMatrix().add(cloud.label, winner_label))


def write_overlap_csv(path: str | Path, stats_by_scale: list[OverlapStats]) -> None:
    """Rank-percentile curve, one ratio column per probe scale."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["rank_percentile"] + [f"overlap_ratio_scale_{s.probe_scale:g}" for s in stats_by_scale]
        )
        rows = max(len(s.curve_percentiles) for s in stats_by_scale)
        for i in range(rows):
            row = [f"{stats_by_scale[0].curve_percentiles[i]:.4f}"]
            for s in stats_by_scale:
                row.append(f"{s.curve_ratios[i]:.10f}" if i < len(s.curve_ratios) else "")
            writer.writerow(row)


def write_class_overlap_json(path: str | Path, stats: ClassOverlapStats) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(stats.to_dict(), f, indent=2)
        f.write("\n")
