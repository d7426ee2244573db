"""bevgrid: bird's-eye-view rasterization, completion, remapping and
loss analysis for urban-scale point clouds."""

__version__ = "0.1.0"

from .pointcloud import (
    CLASS_NAMES,
    NUM_CLASSES,
    UNLABELED,
    Point,
    PointCloud,
    read_labels,
    read_point_stream,
    read_points,
    write_labels,
    write_points,
)
from .projection import (
    Bounds,
    ProjectionConfig,
    RasterSet,
    WindowMeta,
    partition_grid,
    project,
    quantize,
    rasterize,
    windows_for_cell,
)
from .completion import complete, fixpoint_iterations
from .metrics import ConfusionMatrix, class_weights, evaluate_labels, summarize
from .analysis import class_overlap, oracle_bound, spatial_overlap
from .remapping import remap, remap_window
from .synthetic import SceneSpec, generate_city, random_scene_spec, single_layer_spec
from .config import PipelineConfig

__all__ = [
    "CLASS_NAMES",
    "NUM_CLASSES",
    "UNLABELED",
    "Point",
    "PointCloud",
    "Bounds",
    "ProjectionConfig",
    "PipelineConfig",
    "RasterSet",
    "WindowMeta",
    "SceneSpec",
    "ConfusionMatrix",
    "read_point_stream",
    "read_points",
    "read_labels",
    "write_points",
    "write_labels",
    "partition_grid",
    "windows_for_cell",
    "quantize",
    "rasterize",
    "project",
    "complete",
    "fixpoint_iterations",
    "remap",
    "remap_window",
    "spatial_overlap",
    "class_overlap",
    "oracle_bound",
    "summarize",
    "evaluate_labels",
    "class_weights",
    "generate_city",
    "random_scene_spec",
    "single_layer_spec",
]
