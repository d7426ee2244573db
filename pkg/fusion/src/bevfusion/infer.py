"""Write one prediction raster per window, named for the remap contract."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import bundle_names, load_window
from .train import load_checkpoint


@torch.no_grad()
def infer(checkpoint_path: str | Path, bundle_dir: str | Path, out_dir: str | Path) -> list[str]:
    """Argmax class per pixel for every bundle window.

    Every pixel gets a class in [0, num_classes), completed and nodata
    pixels included, so downstream remapping never sees a missing
    prediction. Output files are ``{name}_label.png`` next to the input
    naming, byte-identical across runs for a fixed checkpoint.
    """
    model, _ = load_checkpoint(checkpoint_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in bundle_names(bundle_dir):
        sample = load_window(bundle_dir, name)
        logits = model(sample.rgb.unsqueeze(0), sample.alt.unsqueeze(0))[0]
        pred = logits.argmax(dim=0).to(torch.uint8).numpy()
        Image.fromarray(np.ascontiguousarray(pred)).save(out_dir / f"{name}_label.png")
        written.append(name)
    return written
