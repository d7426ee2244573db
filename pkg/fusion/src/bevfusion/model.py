"""Two-stream encoder/decoder segmentation network with staged fusion.

The color and altitude rasters run through parallel encoders; after every
selected encoder stage a FuseBlock merges the altitude features into the
color stream, and the fused maps feed the decoder skips. The decoder is
one bottleneck conv block plus four transposed-conv upsampling blocks, so
the logits keep the input's spatial size.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ConvBlock, FuseBlock, ResidualBlock, UpBlock

NUM_CLASSES = 13


@dataclass(frozen=True)
class FusionArchSpec:
    """Architecture knobs; encoder/decoder depth is fixed at 4 + 5 blocks.

    Stages 3 and 4 of each encoder are residual blocks, the rest plain
    conv blocks; the four decoder upsampling blocks use transposed
    convolutions. fusion_stages picks where the two streams exchange
    information (1-based stage numbers, default after every stage).
    """

    encoder_blocks: int = 4
    decoder_blocks: int = 5
    base_width: int = 16
    fusion_stages: tuple[int, ...] = (1, 2, 3, 4)
    num_classes: int = NUM_CLASSES
    image_channels: int = 3
    altitude_channels: int = 1

    def validate(self) -> None:
        if self.encoder_blocks != 4 or self.decoder_blocks != 5:
            raise ValueError("the architecture is fixed at 4 encoder and 5 decoder blocks")
        if self.base_width < 2:
            raise ValueError("base_width must be at least 2")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        bad = [s for s in self.fusion_stages if not 1 <= s <= self.encoder_blocks]
        if bad:
            raise ValueError(f"fusion stages out of range: {bad}")

    @property
    def stage_widths(self) -> tuple[int, ...]:
        w = self.base_width
        return (w, 2 * w, 4 * w, 8 * w)


def _encoder_stage(stage: int, in_channels: int, out_channels: int) -> nn.Module:
    # the deeper half of the encoder uses residual blocks
    if stage >= 3:
        return ResidualBlock(in_channels, out_channels)
    return ConvBlock(in_channels, out_channels)


class FusionUNet(nn.Module):
    """Multi-modal segmentation over (rgb, altitude) raster pairs."""

    DOWNSCALE = 16  # four pooling steps

    def __init__(self, spec: FusionArchSpec | None = None):
        super().__init__()
        self.spec = spec or FusionArchSpec()
        self.spec.validate()
        widths = self.spec.stage_widths

        img_in = [self.spec.image_channels] + list(widths[:-1])
        alt_in = [self.spec.altitude_channels] + list(widths[:-1])
        self.img_stages = nn.ModuleList(
            _encoder_stage(i + 1, img_in[i], widths[i]) for i in range(4)
        )
        self.alt_stages = nn.ModuleList(
            _encoder_stage(i + 1, alt_in[i], widths[i]) for i in range(4)
        )
        self.fusers = nn.ModuleDict(
            {str(s): FuseBlock(widths[s - 1]) for s in self.spec.fusion_stages}
        )
        self.pool = nn.MaxPool2d(2)

        # decoder: bottleneck conv block, then four transposed-conv blocks
        self.bottleneck = ConvBlock(widths[3], widths[3])
        self.up4 = UpBlock(widths[3], widths[3], widths[2])
        self.up3 = UpBlock(widths[2], widths[2], widths[1])
        self.up2 = UpBlock(widths[1], widths[1], widths[0])
        self.up1 = UpBlock(widths[0], widths[0], widths[0])
        self.head = nn.Conv2d(widths[0], self.spec.num_classes, 1)

    def forward(self, rgb: torch.Tensor, alt: torch.Tensor) -> torch.Tensor:
        if rgb.shape[-2:] != alt.shape[-2:]:
            raise ValueError("rgb and altitude rasters must share a spatial size")
        h, w = rgb.shape[-2:]
        rgb, alt = self._pad(rgb), self._pad(alt)

        skips = []
        x_img, x_alt = rgb, alt
        for stage in range(1, 5):
            x_img = self.img_stages[stage - 1](x_img)
            x_alt = self.alt_stages[stage - 1](x_alt)
            if str(stage) in self.fusers:
                fused = self.fusers[str(stage)](x_img, x_alt)
                x_img = fused  # fused features continue down the image stream
            skips.append(x_img)
            if stage < 4:
                x_img = self.pool(x_img)
                x_alt = self.pool(x_alt)

        x = self.bottleneck(self.pool(skips[3]))
        x = self.up4(x, skips[3])
        x = self.up3(x, skips[2])
        x = self.up2(x, skips[1])
        x = self.up1(x, skips[0])
        logits = self.head(x)
        return logits[..., :h, :w]

    def _pad(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        m = self.DOWNSCALE
        pad_h = (m - h % m) % m
        pad_w = (m - w % m) % m
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        return x
