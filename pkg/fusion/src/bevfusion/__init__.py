"""bevfusion: attention-fusion segmentation over BEV raster bundles."""

__version__ = "0.1.0"

from .blocks import FuseBlock
from .model import FusionArchSpec, FusionUNet
from .train import TrainConfig, load_checkpoint, train, valid_pixel_accuracy
from .infer import infer

__all__ = [
    "FuseBlock",
    "FusionArchSpec",
    "FusionUNet",
    "TrainConfig",
    "train",
    "infer",
    "load_checkpoint",
    "valid_pixel_accuracy",
]
