"""Load projection bundle directories as training tensors.

Consumes the bundle layout verbatim: per window ``{name}_rgb.png``,
``{name}_alt.png`` (16-bit, normalized to the window's z range),
``{name}_label.png`` (255 = nodata), ``{name}_mask.png``, and
``manifest.json`` listing the windows. Nothing here imports the producer
package; the files are the contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

UNLABELED = 255


@dataclass
class WindowSample:
    name: str
    rgb: torch.Tensor  # (3, H, W) float32 in [0, 1]
    alt: torch.Tensor  # (1, H, W) float32 in [0, 1]
    label: torch.Tensor  # (H, W) int64, 255 where nodata
    mask: torch.Tensor  # (H, W) bool
    z_range: float  # z_max - z_min in meters


def bundle_names(bundle_dir: str | Path) -> list[str]:
    manifest = Path(bundle_dir) / "manifest.json"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.json in {bundle_dir}")
    with open(manifest, encoding="utf-8") as f:
        data = json.load(f)
    return [w["name"] for w in data["windows"]]


def load_window(bundle_dir: str | Path, name: str) -> WindowSample:
    bundle_dir = Path(bundle_dir)

    def arr(kind, dtype):
        path = bundle_dir / f"{name}_{kind}.png"
        if not path.exists():
            raise FileNotFoundError(f"bundle {name} is missing its {kind} raster: {path}")
        return np.asarray(Image.open(path)).astype(dtype)

    rgb = arr("rgb", np.float32) / 255.0
    alt = arr("alt", np.float32) / 65535.0
    label = arr("label", np.int64)
    mask = arr("mask", np.uint8) > 0
    with open(bundle_dir / f"{name}_meta.json", encoding="utf-8") as f:
        meta = json.load(f)
    return WindowSample(
        name=name,
        rgb=torch.from_numpy(rgb).permute(2, 0, 1).contiguous(),
        alt=torch.from_numpy(alt).unsqueeze(0),
        label=torch.from_numpy(label),
        mask=torch.from_numpy(mask),
        z_range=float(meta["z_max"]) - float(meta["z_min"]),
    )


def load_bundles(bundle_dir: str | Path) -> list[WindowSample]:
    names = bundle_names(bundle_dir)
    if not names:
        raise ValueError(f"{bundle_dir} lists no windows; nothing to learn from")
    return [load_window(bundle_dir, name) for name in names]


def crop_sample(sample: WindowSample, size: int, generator: torch.Generator) -> WindowSample:
    """Random size x size crop; identity when the window is already that size."""
    _, h, w = sample.rgb.shape
    if h < size or w < size:
        raise ValueError(f"window {sample.name} is {h}x{w}, smaller than the {size} crop")
    if h == size and w == size:
        return sample
    top = int(torch.randint(0, h - size + 1, (1,), generator=generator))
    left = int(torch.randint(0, w - size + 1, (1,), generator=generator))
    return WindowSample(
        name=sample.name,
        rgb=sample.rgb[:, top : top + size, left : left + size],
        alt=sample.alt[:, top : top + size, left : left + size],
        label=sample.label[top : top + size, left : left + size],
        mask=sample.mask[top : top + size, left : left + size],
        z_range=sample.z_range,
    )


def stack_batch(samples: list[WindowSample]):
    rgb = torch.stack([s.rgb for s in samples])
    alt = torch.stack([s.alt for s in samples])
    label = torch.stack([s.label for s in samples])
    mask = torch.stack([s.mask for s in samples])
    return rgb, alt, label, mask
