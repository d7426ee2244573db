"""Building blocks: conv/residual stages and the channel-attention fuse block."""

from __future__ import annotations

import torch
import torch.nn as nn


class ConvBlock(nn.Module):
    """Two 3x3 conv / batch-norm / ReLU layers."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class ResidualBlock(nn.Module):
    """Basic residual block (two 3x3 convs plus identity/projection skip)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.skip = (
            nn.Identity()
            if in_channels == out_channels
            else nn.Conv2d(in_channels, out_channels, 1, bias=False)
        )

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.skip(x))


class FuseBlock(nn.Module):
    """Fuse two equal-shape feature maps by gated channel selection.

    The inputs are concatenated along channels, a per-channel gate in
    [0, 1] is computed from globally pooled statistics (average pool,
    two-layer bottleneck, sigmoid), the gated map is reduced back to the
    input width by a 1x1 convolution. Output shape equals each input's
    shape, so blocks can be stacked anywhere in a network.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        self.channels = channels
        hidden = max(2, 2 * channels // reduction)
        self.gate = nn.Sequential(
            nn.Linear(2 * channels, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 2 * channels),
            nn.Sigmoid(),
        )
        self.reduce = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, feat_img, feat_alt, gates=None):
        """``gates`` overrides the computed per-channel gate (tests use it
        to force degenerate selections)."""
        if feat_img.shape != feat_alt.shape:
            raise ValueError(
                f"fuse inputs must share a shape, got {tuple(feat_img.shape)} "
                f"and {tuple(feat_alt.shape)}"
            )
        stacked = torch.cat([feat_img, feat_alt], dim=1)
        if gates is None:
            gates = self.gate(stacked.mean(dim=(2, 3)))
        gated = stacked * gates.reshape(stacked.shape[0], stacked.shape[1], 1, 1)
        return self.reduce(gated)


class UpBlock(nn.Module):
    """Transposed-conv upsample, concatenate the skip, then a conv block."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(in_channels, out_channels, 2, stride=2)
        self.conv = ConvBlock(out_channels + skip_channels, out_channels)

    def forward(self, x, skip):
        x = self.up(x)
        return self.conv(torch.cat([x, skip], dim=1))
