"""Grid partition, sliding windows, and top-altitude rasterization.

The map is tiled into grid cells, each cell into g_size x g_size meter
windows strided by g_step, and every window rasterized at g_scale meters
per pixel. Per pixel the highest point wins (ties go to the lowest point
index), producing RGB, altitude and label images plus a validity mask
and the winning point's ordinal for loss bookkeeping.

All pixel arithmetic is floor((coord - origin) / scale) with the origin
formed first; intervals are half-open, except that a point lying exactly
on the far edge of the globally last window clamps to the last pixel so
the bounding-box maximum is never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .pointcloud import UNLABELED, PointCloud, read_point_stream

NO_POINT = -1  # winner_index sentinel for pixels that received no point
DEFAULT_MAX_WINDOW_PIXELS = 4096 * 4096


@dataclass(frozen=True)
class ProjectionConfig:
    """Window and raster geometry plus completion defaults."""

    g_scale: float = 0.05  # meters per pixel
    g_size: float = 25.0  # window side, meters
    g_step: float = 25.0  # window stride, meters
    cell_side: float = 400.0  # grid cell side, meters
    completion_iterations: int = 3
    kernel: int = 3

    def validate(self) -> None:
        if self.g_scale <= 0:
            raise ValueError(f"g_scale must be positive, got {self.g_scale}")
        if not 0 < self.g_step <= self.g_size:
            raise ValueError(f"need 0 < g_step <= g_size, got step {self.g_step}, size {self.g_size}")
        if self.cell_side < self.g_size:
            raise ValueError(f"cell_side {self.cell_side} smaller than window size {self.g_size}")
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 3, got {self.kernel}")
        if self.completion_iterations < 0:
            raise ValueError("completion_iterations must be >= 0")
        if self.pixels_per_side < 1:
            raise ValueError("window is smaller than one pixel")

    @property
    def pixels_per_side(self) -> int:
        return int(round(self.g_size / self.g_scale))

    def to_dict(self) -> dict:
        return {
            "g_scale": self.g_scale,
            "g_size": self.g_size,
            "g_step": self.g_step,
            "cell_side": self.cell_side,
            "completion_iterations": self.completion_iterations,
            "kernel": self.kernel,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionConfig":
        return cls(**{k: data[k] for k in cls().to_dict()})


@dataclass(frozen=True)
class Bounds:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @classmethod
    def of_cloud(cls, cloud: PointCloud) -> "Bounds":
        if len(cloud) == 0:
            raise ValueError("empty cloud has no bounds")
        x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
        return cls(float(x.min()), float(y.min()), float(x.max()), float(y.max()))

    def union(self, other: "Bounds") -> "Bounds":
        return Bounds(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def validate(self) -> None:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"zero-area bounds {self}")


@dataclass(frozen=True)
class GridCell:
    cell_id: int
    ix: int
    iy: int
    x0: float
    y0: float
    x1: float  # cropped to the map bounds, so edge cells can be narrow
    y1: float


@dataclass
class WindowMeta:
    """Geometry and bookkeeping for one rasterized window.

    x_s/y_s are absolute meters, which is what makes the raster-to-cloud
    remapping exact. z bounds and point_count are unset until the window
    is rasterized. kx/ky are the stride offsets inside the cell and name
    the window's file bundle; they are derivable from x_s/y_s and are not
    part of the serialized metadata.
    """

    window_id: int
    cell_id: int
    x_s: float
    y_s: float
    width_px: int
    height_px: int
    z_min: float | None = None
    z_max: float | None = None
    point_count: int = 0
    g_scale: float = 0.0
    kx: int = 0
    ky: int = 0

    @property
    def name(self) -> str:
        return f"cell{self.cell_id}_win{self.kx}_{self.ky}"

    def to_meta_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "cell_id": self.cell_id,
            "x_s": self.x_s,
            "y_s": self.y_s,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "z_min": 0.0 if self.z_min is None else self.z_min,
            "z_max": 0.0 if self.z_max is None else self.z_max,
            "point_count": self.point_count,
            "g_scale": self.g_scale,
        }


@dataclass
class RasterSet:
    """Per-window images; row = y pixel, column = x pixel.

    winner_index is None for rasters loaded from disk (the bundle format
    does not persist it); in freshly rasterized windows it holds the
    winning point's ordinal, NO_POINT where the mask is false.
    """

    rgb: np.ndarray  # (H, W, 3) uint8
    alt: np.ndarray  # (H, W) float64 meters
    label: np.ndarray  # (H, W) uint8, 255 = nodata
    mask: np.ndarray  # (H, W) bool
    winner_index: np.ndarray | None = None  # (H, W) int64

    @classmethod
    def empty(cls, height: int, width: int) -> "RasterSet":
        return cls(
            rgb=np.zeros((height, width, 3), np.uint8),
            alt=np.zeros((height, width), np.float64),
            label=np.full((height, width), UNLABELED, np.uint8),
            mask=np.zeros((height, width), bool),
            winner_index=np.full((height, width), NO_POINT, np.int64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def copy(self) -> "RasterSet":
        return RasterSet(
            self.rgb.copy(),
            self.alt.copy(),
            self.label.copy(),
            self.mask.copy(),
            None if self.winner_index is None else self.winner_index.copy(),
        )


def partition_grid(bounds: Bounds, cell_side: float) -> list[GridCell]:
    """Tile the bounding box with half-open cells of at most cell_side.

    The last row/column is cropped to the bounds; points exactly on the
    global maximum are assigned to the last cell rather than dropped.
    """
    if cell_side <= 0:
        raise ValueError(f"cell_side must be positive, got {cell_side}")
    bounds.validate()
    ncx = max(1, math.ceil((bounds.x_max - bounds.x_min) / cell_side))
    ncy = max(1, math.ceil((bounds.y_max - bounds.y_min) / cell_side))
    cells = []
    for iy in range(ncy):
        for ix in range(ncx):
            x0 = bounds.x_min + ix * cell_side
            y0 = bounds.y_min + iy * cell_side
            cells.append(
                GridCell(
                    cell_id=iy * ncx + ix,
                    ix=ix,
                    iy=iy,
                    x0=x0,
                    y0=y0,
                    x1=min(x0 + cell_side, bounds.x_max),
                    y1=min(y0 + cell_side, bounds.y_max),
                )
            )
    return cells


def windows_for_cell(
    cell: GridCell, config: ProjectionConfig, start_id: int = 0
) -> list[WindowMeta]:
    """Geometry-only windows covering the cell, origins at k * g_step.

    The last window may extend past the cell edge; points beyond the cell
    belong to the neighboring cell and are never re-claimed.
    """
    config.validate()
    side = config.pixels_per_side
    nwx = max(1, math.ceil((cell.x1 - cell.x0) / config.g_step))
    nwy = max(1, math.ceil((cell.y1 - cell.y0) / config.g_step))
    metas = []
    for ky in range(nwy):
        for kx in range(nwx):
            metas.append(
                WindowMeta(
                    window_id=start_id + ky * nwx + kx,
                    cell_id=cell.cell_id,
                    x_s=cell.x0 + kx * config.g_step,
                    y_s=cell.y0 + ky * config.g_step,
                    width_px=side,
                    height_px=side,
                    g_scale=config.g_scale,
                    kx=kx,
                    ky=ky,
                )
            )
    return metas


def quantize(
    x: float, y: float, meta: WindowMeta, clamp_edges: tuple[bool, bool] = (False, False)
) -> tuple[int, int] | None:
    """Pixel of (x, y) in the window, or None when outside it.

    clamp_edges marks the globally last window per axis, where a point
    exactly on the far edge clamps to the last pixel instead.
    """
    px = math.floor((x - meta.x_s) / meta.g_scale)
    py = math.floor((y - meta.y_s) / meta.g_scale)
    if px == meta.width_px and clamp_edges[0]:
        px = meta.width_px - 1
    if py == meta.height_px and clamp_edges[1]:
        py = meta.height_px - 1
    if 0 <= px < meta.width_px and 0 <= py < meta.height_px:
        return px, py
    return None


@dataclass
class Tiling:
    """Precomputed cell/window layout with vectorized point assignment."""

    bounds: Bounds
    config: ProjectionConfig
    cells: list[GridCell]
    windows: list[WindowMeta]
    ncx: int
    ncy: int
    # per-cell lookup tables, indexed by cell_id
    cell_x0: np.ndarray = field(repr=False, default=None)
    cell_y0: np.ndarray = field(repr=False, default=None)
    nwx: np.ndarray = field(repr=False, default=None)
    nwy: np.ndarray = field(repr=False, default=None)
    window_offset: np.ndarray = field(repr=False, default=None)

    def _cell_of(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        b, cs = self.bounds, self.config.cell_side
        cx = np.floor((x - b.x_min) / cs).astype(np.int64)
        cy = np.floor((y - b.y_min) / cs).astype(np.int64)
        np.clip(cx, 0, self.ncx - 1, out=cx)
        np.clip(cy, 0, self.ncy - 1, out=cy)
        return cy * self.ncx + cx

    def _window_range(self, coord, cell_origin, nwin):
        """Smallest and largest covering window index along one axis."""
        step, size = self.config.g_step, self.config.g_size
        k_max = np.floor((coord - cell_origin) / step).astype(np.int64)
        k_min = np.floor((coord - cell_origin - size) / step).astype(np.int64) + 1
        np.clip(k_max, 0, nwin - 1, out=k_max)
        np.clip(k_min, 0, None, out=k_min)
        np.minimum(k_min, k_max, out=k_min)
        return k_min, k_max

    def _pixel(self, coord, cell_origin, k, side):
        origin = cell_origin + k * self.config.g_step
        p = np.floor((coord - origin) / self.config.g_scale).astype(np.int64)
        np.clip(p, 0, side - 1, out=p)
        return p

    def assign_owner(self, x: np.ndarray, y: np.ndarray):
        """(window_id, px, py) per point, smallest covering window winning.

        For g_step == g_size this is the unique owner; points exactly on
        the global maximum edge clamp into the last window and pixel.
        """
        cell = self._cell_of(x, y)
        cx0 = self.cell_x0[cell]
        cy0 = self.cell_y0[cell]
        kx, _ = self._window_range(x, cx0, self.nwx[cell])
        ky, _ = self._window_range(y, cy0, self.nwy[cell])
        win = self.window_offset[cell] + ky * self.nwx[cell] + kx
        side = self.config.pixels_per_side
        px = self._pixel(x, cx0, kx, side)
        py = self._pixel(y, cy0, ky, side)
        return win, px, py

    def iter_cover_assignments(self, x: np.ndarray, y: np.ndarray):
        """Yield (rows, window_id, px, py) for every covering window.

        With g_step == g_size there is a single pass equal to
        assign_owner; smaller strides yield one pass per cover offset.
        """
        cell = self._cell_of(x, y)
        cx0 = self.cell_x0[cell]
        cy0 = self.cell_y0[cell]
        kminx, kmaxx = self._window_range(x, cx0, self.nwx[cell])
        kminy, kmaxy = self._window_range(y, cy0, self.nwy[cell])
        side = self.config.pixels_per_side
        max_cover = math.ceil(self.config.g_size / self.config.g_step)
        rows = np.arange(len(x))
        for ox in range(max_cover):
            for oy in range(max_cover):
                sel = (kminx + ox <= kmaxx) & (kminy + oy <= kmaxy)
                if not sel.any():
                    continue
                r = rows[sel]
                kx = kminx[sel] + ox
                ky = kminy[sel] + oy
                c = cell[sel]
                win = self.window_offset[c] + ky * self.nwx[c] + kx
                px = self._pixel(x[sel], self.cell_x0[c], kx, side)
                py = self._pixel(y[sel], self.cell_y0[c], ky, side)
                yield r, win, px, py


def build_tiling(
    bounds: Bounds,
    config: ProjectionConfig,
    max_window_pixels: int = DEFAULT_MAX_WINDOW_PIXELS,
) -> Tiling:
    config.validate()
    side = config.pixels_per_side
    if side * side > max_window_pixels:
        raise ValueError(
            f"windows would hold {side}x{side} pixels, over the cap of {max_window_pixels}; "
            "raise --max-window-pixels or coarsen g_scale"
        )
    cells = partition_grid(bounds, config.cell_side)
    ncx = max(c.ix for c in cells) + 1
    ncy = max(c.iy for c in cells) + 1
    windows: list[WindowMeta] = []
    ncells = len(cells)
    cell_x0 = np.empty(ncells)
    cell_y0 = np.empty(ncells)
    nwx = np.empty(ncells, np.int64)
    nwy = np.empty(ncells, np.int64)
    offset = np.empty(ncells, np.int64)
    for cell in cells:
        metas = windows_for_cell(cell, config, start_id=len(windows))
        cell_x0[cell.cell_id] = cell.x0
        cell_y0[cell.cell_id] = cell.y0
        nwx[cell.cell_id] = max(1, math.ceil((cell.x1 - cell.x0) / config.g_step))
        nwy[cell.cell_id] = max(1, math.ceil((cell.y1 - cell.y0) / config.g_step))
        offset[cell.cell_id] = len(windows)
        windows.extend(metas)
    return Tiling(
        bounds=bounds,
        config=config,
        cells=cells,
        windows=windows,
        ncx=ncx,
        ncy=ncy,
        cell_x0=cell_x0,
        cell_y0=cell_y0,
        nwx=nwx,
        nwy=nwy,
        window_offset=offset,
    )


@dataclass
class WindowPoints:
    """All points binned into one window, with their pixel coordinates."""

    meta: WindowMeta
    px: np.ndarray
    py: np.ndarray
    z: np.ndarray
    rgb: np.ndarray
    label: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return len(self.px)


def _iter_chunks(source) -> Iterator[PointCloud]:
    if isinstance(source, PointCloud):
        yield source
    elif isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        yield from read_point_stream(source)
    else:
        yield from source


def load_cloud(source) -> PointCloud:
    """Materialize a cloud from a PointCloud, a path, or an iterable of batches."""
    return PointCloud.concat(_iter_chunks(source))


def source_bounds(source) -> tuple[Bounds | None, int]:
    """One streaming pass for the bounding box and total count."""
    bounds: Bounds | None = None
    total = 0
    for chunk in _iter_chunks(source):
        if len(chunk) == 0:
            continue
        b = Bounds.of_cloud(chunk)
        bounds = b if bounds is None else bounds.union(b)
        total += len(chunk)
    return bounds, total


def bin_cloud(source, tiling: Tiling) -> list[WindowPoints]:
    """Distribute a cloud over the tiling's windows (one streaming pass).

    Every window of the tiling gets an entry, empty ones included, so the
    projection manifest always describes the full tiling.
    """
    buckets: dict[int, list[tuple]] = {}
    for chunk in _iter_chunks(source):
        if len(chunk) == 0:
            continue
        x, y = chunk.xyz[:, 0], chunk.xyz[:, 1]
        for rows, win, px, py in tiling.iter_cover_assignments(x, y):
            order = np.argsort(win, kind="stable")
            win_sorted = win[order]
            starts = np.flatnonzero(np.r_[True, win_sorted[1:] != win_sorted[:-1]])
            ends = np.r_[starts[1:], len(win_sorted)]
            for s, e in zip(starts, ends):
                rows_w = rows[order[s:e]]
                buckets.setdefault(int(win_sorted[s]), []).append(
                    (
                        px[order[s:e]],
                        py[order[s:e]],
                        chunk.xyz[rows_w, 2],
                        chunk.rgb[rows_w],
                        chunk.label[rows_w],
                        chunk.index[rows_w],
                    )
                )
    out = []
    for meta in tiling.windows:
        parts = buckets.get(meta.window_id, [])
        if parts:
            cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
        else:
            cols = [
                np.empty(0, np.int64),
                np.empty(0, np.int64),
                np.empty(0, np.float64),
                np.empty((0, 3), np.uint8),
                np.empty(0, np.uint8),
                np.empty(0, np.int64),
            ]
        out.append(WindowPoints(meta, *cols))
    return out


def rasterize(wp: WindowPoints) -> RasterSet:
    """Top-altitude rasterization of one window's points.

    Per pixel the point with the greatest z wins; exact ties go to the
    lowest point index, so the result is independent of input order. Also
    finalizes the window's z bounds and point count on wp.meta.
    """
    meta = wp.meta
    raster = RasterSet.empty(meta.height_px, meta.width_px)
    n = len(wp)
    if n == 0:
        meta.z_min = meta.z_max = 0.0
        meta.point_count = 0
        return raster
    flat = wp.py * meta.width_px + wp.px
    order = np.lexsort((wp.index, -wp.z, flat))
    flat_sorted = flat[order]
    first = np.r_[True, flat_sorted[1:] != flat_sorted[:-1]]
    winners = order[first]
    py_w, px_w = wp.py[winners], wp.px[winners]
    raster.rgb[py_w, px_w] = wp.rgb[winners]
    raster.alt[py_w, px_w] = wp.z[winners]
    raster.label[py_w, px_w] = wp.label[winners]
    raster.mask[py_w, px_w] = True
    raster.winner_index[py_w, px_w] = wp.index[winners]
    meta.z_min = float(wp.z.min())
    meta.z_max = float(wp.z.max())
    meta.point_count = n
    return raster


@dataclass
class ProjectionResult:
    config: ProjectionConfig
    bounds: Bounds | None
    total_points: int
    windows: list[WindowMeta]
    rasters: list[RasterSet]

    def window_by_name(self, name: str) -> tuple[WindowMeta, RasterSet]:
        for meta, raster in zip(self.windows, self.rasters):
            if meta.name == name:
                return meta, raster
        raise KeyError(name)


def project(
    source,
    config: ProjectionConfig,
    max_window_pixels: int = DEFAULT_MAX_WINDOW_PIXELS,
) -> ProjectionResult:
    """Partition, bin and rasterize a cloud in memory.

    An empty cloud produces an empty manifest. With g_step == g_size every
    point lands in exactly one window; smaller strides duplicate points
    into every covering window. Output is deterministic for fixed input
    and config.
    """
    config.validate()
    cloud = load_cloud(source)
    if len(cloud) == 0:
        return ProjectionResult(config, None, 0, [], [])
    bounds = Bounds.of_cloud(cloud)
    tiling = build_tiling(bounds, config, max_window_pixels)
    window_points = bin_cloud(cloud, tiling)
    rasters = [rasterize(wp) for wp in window_points]
    return ProjectionResult(config, bounds, len(cloud), [wp.meta for wp in window_points], rasters)
