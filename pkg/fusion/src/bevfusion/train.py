"""Training loop: class-weighted cross-entropy over observed pixels only."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import UNLABELED, crop_sample, load_bundles, stack_batch
from .model import FusionArchSpec, FusionUNet


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-3
    crop: int = 128
    seed: int = 0
    weight_offset: float = 1.02


def masked_cross_entropy(logits, labels, mask, class_weights=None):
    """Cross-entropy averaged over mask-true pixels; nodata never contributes.

    A batch with zero valid pixels is an error rather than a zero loss so a
    misconfigured dataset cannot silently train on nothing.
    """
    valid = mask & (labels != UNLABELED)
    if not bool(valid.any()):
        raise ValueError("batch has no valid pixels; nothing to compute a loss on")
    target = labels.clone()
    target[~valid] = 0  # ignored below, but keeps targets in range
    per_pixel = F.cross_entropy(logits, target, weight=class_weights, reduction="none")
    return (per_pixel * valid).sum() / valid.sum()


def log_inverse_weights(samples, num_classes: int, offset: float = 1.02) -> torch.Tensor:
    """w_c = 1 / ln(offset + frequency_c) over the observed training pixels."""
    counts = np.zeros(num_classes, np.int64)
    for s in samples:
        labels = s.label[s.mask & (s.label != UNLABELED)].numpy()
        counts += np.bincount(labels, minlength=num_classes)[:num_classes]
    total = counts.sum()
    if total == 0:
        raise ValueError("bundles contain no labeled pixels")
    freq = counts / total
    return torch.tensor([1.0 / math.log(offset + f) for f in freq], dtype=torch.float32)


def save_checkpoint(path, model: FusionUNet, train_config: TrainConfig, history) -> None:
    torch.save(
        {
            "format": 1,
            "arch": asdict(model.spec),
            "state_dict": model.state_dict(),
            "train_config": asdict(train_config),
            "loss_history": list(history),
        },
        path,
    )


def load_checkpoint(path) -> tuple[FusionUNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    arch = payload["arch"]
    arch["fusion_stages"] = tuple(arch["fusion_stages"])
    model = FusionUNet(FusionArchSpec(**arch))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def train(
    bundle_dir: str | Path,
    checkpoint_path: str | Path,
    config: TrainConfig | None = None,
    arch: FusionArchSpec | None = None,
    class_weights: torch.Tensor | None = None,
) -> list[float]:
    """Fit the network to one bundle directory and write a checkpoint.

    Deterministic for a fixed seed: sample order comes from a dedicated
    torch generator and data loading is single-threaded. Returns the
    per-step loss history (empty for steps=0, which just snapshots the
    initialized network).
    """
    config = config or TrainConfig()
    arch = arch or FusionArchSpec()
    torch.manual_seed(config.seed)
    samples = load_bundles(bundle_dir)
    model = FusionUNet(arch)
    if class_weights is None:
        class_weights = log_inverse_weights(samples, arch.num_classes, config.weight_offset)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    sampler = torch.Generator().manual_seed(config.seed)

    history: list[float] = []
    order: list[int] = []
    model.train()
    for _ in range(config.steps):
        if len(order) < config.batch_size:
            order += torch.randperm(len(samples), generator=sampler).tolist()
        rows = [order.pop(0) for _ in range(min(config.batch_size, len(order)))]
        batch = [crop_sample(samples[i], config.crop, sampler) for i in rows]
        rgb, alt, label, mask = stack_batch(batch)
        optimizer.zero_grad()
        loss = masked_cross_entropy(model(rgb, alt), label, mask, class_weights)
        loss.backward()
        optimizer.step()
        history.append(float(loss.detach()))
    model.eval()
    save_checkpoint(checkpoint_path, model, config, history)
    return history


@torch.no_grad()
def valid_pixel_accuracy(model: FusionUNet, bundle_dir: str | Path) -> float:
    """Fraction of observed, labeled pixels the model classifies correctly."""
    model.eval()
    samples = load_bundles(bundle_dir)
    correct = total = 0
    for s in samples:
        logits = model(s.rgb.unsqueeze(0), s.alt.unsqueeze(0))[0]
        pred = logits.argmax(dim=0)
        valid = s.mask & (s.label != UNLABELED)
        correct += int((pred[valid] == s.label[valid]).sum())
        total += int(valid.sum())
    return correct / total if total else 0.0
