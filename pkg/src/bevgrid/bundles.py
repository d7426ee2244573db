"""On-disk window bundles and the projection manifest.

A window bundle is five files sharing the stem ``cell{C}_win{X}_{Y}``
(X, Y are stride offsets inside the cell): 8-bit RGB, 16-bit grayscale
altitude normalized to the window's z range, 8-bit label (255 = nodata),
8-bit 0/255 mask, and a JSON metadata sidecar. ``manifest.json`` lists
every bundle together with the projection config and the map bounds, so
the exact tiling can be rebuilt for remapping.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .projection import (
    Bounds,
    ProjectionConfig,
    RasterSet,
    WindowMeta,
    bin_cloud,
    build_tiling,
    load_cloud,
    rasterize,
    source_bounds,
    DEFAULT_MAX_WINDOW_PIXELS,
)

MANIFEST_NAME = "manifest.json"
_NAME_RE = re.compile(r"^cell(\d+)_win(\d+)_(\d+)$")


def encode_alt(raster: RasterSet, meta: WindowMeta) -> np.ndarray:
    """Altitude in meters -> u16 per the export contract; 0 where nodata."""
    z_min = meta.z_min or 0.0
    z_max = meta.z_max or 0.0
    span = z_max - z_min
    if span <= 0:
        return np.zeros(raster.shape, np.uint16)
    scaled = np.rint((raster.alt - z_min) / span * 65535.0)
    out = np.clip(scaled, 0, 65535).astype(np.uint16)
    out[~raster.mask] = 0
    return out


def decode_alt(encoded: np.ndarray, meta: WindowMeta, mask: np.ndarray) -> np.ndarray:
    z_min = meta.z_min or 0.0
    z_max = meta.z_max or 0.0
    alt = encoded.astype(np.float64) / 65535.0 * (z_max - z_min) + z_min
    alt[~mask] = 0.0
    return alt


def write_bundle(out_dir: str | Path, meta: WindowMeta, raster: RasterSet) -> str:
    out_dir = Path(out_dir)
    name = meta.name
    Image.fromarray(raster.rgb).save(out_dir / f"{name}_rgb.png")
    Image.fromarray(encode_alt(raster, meta)).save(out_dir / f"{name}_alt.png")
    Image.fromarray(raster.label).save(out_dir / f"{name}_label.png")
    Image.fromarray(raster.mask.astype(np.uint8) * 255).save(out_dir / f"{name}_mask.png")
    with open(out_dir / f"{name}_meta.json", "w", encoding="utf-8") as f:
        json.dump(meta.to_meta_dict(), f, indent=2)
        f.write("\n")
    return name


def _parse_name(name: str) -> tuple[int, int, int]:
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"bundle name {name!r} does not match cell{{C}}_win{{X}}_{{Y}}")
    return int(m.group(1)), int(m.group(2)), int(m.group(3))


def read_meta(bundle_dir: str | Path, name: str) -> WindowMeta:
    with open(Path(bundle_dir) / f"{name}_meta.json", encoding="utf-8") as f:
        data = json.load(f)
    _, kx, ky = _parse_name(name)
    return WindowMeta(**data, kx=kx, ky=ky)


def read_bundle(bundle_dir: str | Path, name: str) -> tuple[WindowMeta, RasterSet]:
    """Load one bundle; winner_index is not persisted and comes back None."""
    bundle_dir = Path(bundle_dir)
    meta = read_meta(bundle_dir, name)
    rgb = np.asarray(Image.open(bundle_dir / f"{name}_rgb.png"), np.uint8)
    label = np.asarray(Image.open(bundle_dir / f"{name}_label.png"), np.uint8)
    mask = np.asarray(Image.open(bundle_dir / f"{name}_mask.png"), np.uint8) > 0
    alt16 = np.asarray(Image.open(bundle_dir / f"{name}_alt.png")).astype(np.uint16)
    raster = RasterSet(rgb=rgb, alt=decode_alt(alt16, meta, mask), label=label, mask=mask)
    return meta, raster


@dataclass
class Manifest:
    config: ProjectionConfig
    bounds: Bounds | None
    total_points: int
    windows: list[WindowMeta]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.windows]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "bounds": None
            if self.bounds is None
            else {
                "x_min": self.bounds.x_min,
                "y_min": self.bounds.y_min,
                "x_max": self.bounds.x_max,
                "y_max": self.bounds.y_max,
            },
            "total_points": self.total_points,
            "windows": [{"name": m.name, **m.to_meta_dict()} for m in self.windows],
        }


def write_manifest(out_dir: str | Path, manifest: Manifest) -> None:
    windows = sorted(manifest.windows, key=lambda m: m.window_id)
    manifest = Manifest(manifest.config, manifest.bounds, manifest.total_points, windows)
    with open(Path(out_dir) / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
        f.write("\n")


def read_manifest(bundle_dir: str | Path) -> Manifest:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {bundle_dir}")
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    config = ProjectionConfig.from_dict(data["config"])
    bounds = None
    if data["bounds"] is not None:
        b = data["bounds"]
        bounds = Bounds(b["x_min"], b["y_min"], b["x_max"], b["y_max"])
    windows = []
    seen = set()
    for entry in data["windows"]:
        name = entry["name"]
        _, kx, ky = _parse_name(name)
        meta = WindowMeta(**{k: v for k, v in entry.items() if k != "name"}, kx=kx, ky=ky)
        if meta.window_id in seen:
            raise ValueError(f"duplicate window_id {meta.window_id} in manifest")
        seen.add(meta.window_id)
        windows.append(meta)
    windows.sort(key=lambda m: m.window_id)
    return Manifest(config, bounds, data["total_points"], windows)


def project_to_dir(
    source,
    config: ProjectionConfig,
    out_dir: str | Path,
    jobs: int = 1,
    max_window_pixels: int = DEFAULT_MAX_WINDOW_PIXELS,
) -> Manifest:
    """Project a cloud and write one bundle per window plus the manifest.

    Windows are rasterized and written in parallel across ``jobs`` workers;
    output bytes are identical for every worker count.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud = load_cloud(source)
    bounds, total = source_bounds(cloud)
    if bounds is None:
        manifest = Manifest(config, None, 0, [])
        write_manifest(out_dir, manifest)
        return manifest
    tiling = build_tiling(bounds, config, max_window_pixels)
    window_points = bin_cloud(cloud, tiling)

    def work(wp) -> WindowMeta:
        raster = rasterize(wp)
        write_bundle(out_dir, wp.meta, raster)
        return wp.meta

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            metas = list(pool.map(work, window_points))
    else:
        metas = [work(wp) for wp in window_points]
    manifest = Manifest(config, bounds, total, metas)
    write_manifest(out_dir, manifest)
    return manifest


def complete_dir(
    bundle_dir: str | Path,
    out_dir: str | Path | None = None,
    iterations: int | None = None,
    kernel: int | None = None,
    label_strategy: str = "majority",
    in_place: bool = False,
    jobs: int = 1,
) -> tuple[Path, Manifest]:
    """Run completion over every bundle in a directory.

    Writes to ``out_dir`` (default: sibling directory suffixed ``_c``), or
    overwrites the input bundles when ``in_place`` is set. Iteration count
    and kernel default to the values recorded in the manifest.
    """
    from . import completion  # local import keeps module load light

    bundle_dir = Path(bundle_dir)
    manifest = read_manifest(bundle_dir)
    iterations = manifest.config.completion_iterations if iterations is None else iterations
    kernel = manifest.config.kernel if kernel is None else kernel
    if in_place:
        target = bundle_dir
    else:
        target = Path(out_dir) if out_dir is not None else bundle_dir.parent / (bundle_dir.name + "_c")
        target.mkdir(parents=True, exist_ok=True)

    def work(meta_in) -> WindowMeta:
        meta, raster = read_bundle(bundle_dir, meta_in.name)
        done = completion.complete(raster, iterations, kernel, label_strategy)
        write_bundle(target, meta, done)
        return meta

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            metas = list(pool.map(work, manifest.windows))
    else:
        metas = [work(m) for m in manifest.windows]
    from dataclasses import replace

    new_config = replace(manifest.config, completion_iterations=iterations, kernel=kernel)
    out_manifest = Manifest(new_config, manifest.bounds, manifest.total_points, metas)
    write_manifest(target, out_manifest)
    return target, out_manifest
