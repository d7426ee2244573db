"""Deterministic synthetic urban scenes for tests and calibration.

Scenes are built from a small object vocabulary (ground plane, roofed
boxes with optional walls, vegetation columns) so vertical stacking, and
with it projection loss, is fully controllable. Generation is a pure
function of the ``SceneSpec``: same spec, same bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .pointcloud import NUM_CLASSES, PointCloud

# x0, y0, x1, y1 in meters
Rect = tuple[float, float, float, float]

Z_JITTER = 0.01  # flat surfaces get up to 1 cm of altitude noise
COLOR_NOISE = 10

WALL_SIDES = ("xmin", "xmax", "ymin", "ymax")

PALETTE = np.array(
    [
        (120, 110, 100),  # ground
        (60, 140, 60),    # vegetation
        (180, 100, 80),   # building
        (150, 150, 140),  # wall
        (90, 90, 110),    # bridge
        (70, 70, 75),     # parking
        (140, 110, 60),   # rail
        (50, 50, 55),     # traffic road
        (200, 160, 60),   # street furniture
        (170, 40, 40),    # car
        (160, 150, 130),  # footpath
        (40, 160, 190),   # bike
        (40, 80, 170),    # water
    ],
    dtype=np.int16,
)


def _rect_area(rect: Rect) -> float:
    return max(0.0, rect[2] - rect[0]) * max(0.0, rect[3] - rect[1])


@dataclass(frozen=True)
class GroundPlane:
    """Horizontal surface, optionally painted with class patches.

    ``spacing`` switches from density sampling to a jittered grid with at
    most one point per ``spacing`` step, which guarantees single-layer
    scenes stay below one point per pixel for any pixel size >= spacing/2.
    """

    class_id: int = 0
    z: float = 0.0
    footprint: Rect | None = None  # None covers the whole extent
    patches: tuple[tuple[Rect, int], ...] = ()
    spacing: float | None = None


@dataclass(frozen=True)
class RoofedBox:
    """Roof surface at ``roof_z`` plus walls on the listed sides.

    Side names are xmin/xmax/ymin/ymax; an empty tuple gives the floating
    roof with nothing underneath that aerial reconstructions produce. Low
    wall-less boxes double as cars. ``spacing`` grid-samples the roof like
    GroundPlane.spacing does.
    """

    footprint: Rect
    roof_z: float
    class_id: int
    walls: tuple[str, ...] = ()
    wall_class_id: int | None = None
    base_z: float = 0.0
    spacing: float | None = None


@dataclass(frozen=True)
class Column:
    """Vertical cylinder (vegetation); z spreads over the full height."""

    x: float
    y: float
    radius: float
    height: float
    class_id: int
    base_z: float = 0.0


SceneObject = Union[GroundPlane, RoofedBox, Column]


@dataclass(frozen=True)
class SceneSpec:
    extent: tuple[float, float]  # width, height in meters
    density: float  # points per square meter of sampled surface
    objects: tuple[SceneObject, ...]
    rng_seed: int = 0

    def validate(self) -> None:
        w, h = self.extent
        if w <= 0 or h <= 0:
            raise ValueError(f"degenerate extent {self.extent}")
        if self.density <= 0:
            raise ValueError(f"density must be positive, got {self.density}")
        if not self.objects:
            raise ValueError("scene has an empty object list")
        for obj in self.objects:
            ids = [obj.class_id]
            if isinstance(obj, GroundPlane):
                ids += [cid for _, cid in obj.patches]
            if isinstance(obj, RoofedBox):
                ids.append(obj.class_id if obj.wall_class_id is None else obj.wall_class_id)
                for side in obj.walls:
                    if side not in WALL_SIDES:
                        raise ValueError(f"unknown wall side {side!r}")
            for cid in ids:
                if not 0 <= cid < NUM_CLASSES:
                    raise ValueError(f"class id {cid} out of range")


def _grid_positions(rect: Rect, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    # Points sit at (i + 0.25) * spacing inside the rect, so a jitter of
    # spacing/8 can never push them across a spacing/2 pixel boundary.
    x0, y0, x1, y1 = rect
    nx = int((x1 - x0) / spacing)
    ny = int((y1 - y0) / spacing)
    xs = x0 + (np.arange(nx) + 0.25) * spacing
    ys = y0 + (np.arange(ny) + 0.25) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return gx.ravel(), gy.ravel()


def _surface_counts(obj: SceneObject, spec: SceneSpec) -> list[int]:
    """Point count per sampled surface, in sampling order."""

    def by_area(area: float) -> int:
        return max(1, round(spec.density * area))

    if isinstance(obj, GroundPlane):
        rect = obj.footprint or (0.0, 0.0, spec.extent[0], spec.extent[1])
        if obj.spacing is not None:
            nx = int((rect[2] - rect[0]) / obj.spacing)
            ny = int((rect[3] - rect[1]) / obj.spacing)
            return [nx * ny]
        return [by_area(_rect_area(rect))]
    if isinstance(obj, RoofedBox):
        if obj.spacing is not None:
            nx = int((obj.footprint[2] - obj.footprint[0]) / obj.spacing)
            ny = int((obj.footprint[3] - obj.footprint[1]) / obj.spacing)
            counts = [nx * ny]
        else:
            counts = [by_area(_rect_area(obj.footprint))]
        x0, y0, x1, y1 = obj.footprint
        height = obj.roof_z - obj.base_z
        for side in obj.walls:
            length = (y1 - y0) if side in ("xmin", "xmax") else (x1 - x0)
            counts.append(by_area(length * height))
        return counts
    if isinstance(obj, Column):
        # one density layer per meter of height
        area = math.pi * obj.radius**2 * max(1.0, obj.height)
        return [by_area(area)]
    raise TypeError(f"unknown scene object {type(obj).__name__}")


def estimate_point_count(spec: SceneSpec) -> int:
    return sum(sum(_surface_counts(obj, spec)) for obj in spec.objects)


def _sample_ground(obj: GroundPlane, spec: SceneSpec, rng: np.random.Generator):
    rect = obj.footprint or (0.0, 0.0, spec.extent[0], spec.extent[1])
    if obj.spacing is not None:
        x, y = _grid_positions(rect, obj.spacing)
        jit = min(obj.spacing / 8.0, Z_JITTER)
        x = x + rng.uniform(-jit, jit, len(x))
        y = y + rng.uniform(-jit, jit, len(y))
    else:
        (n,) = _surface_counts(obj, spec)
        x = rng.uniform(rect[0], rect[2], n)
        y = rng.uniform(rect[1], rect[3], n)
    z = obj.z + rng.uniform(0.0, Z_JITTER, len(x))
    labels = np.full(len(x), obj.class_id, np.uint8)
    for patch, cid in obj.patches:
        inside = (x >= patch[0]) & (x < patch[2]) & (y >= patch[1]) & (y < patch[3])
        labels[inside] = cid
    return np.stack([x, y, z], axis=1), labels


def _sample_box(obj: RoofedBox, spec: SceneSpec, rng: np.random.Generator):
    counts = _surface_counts(obj, spec)
    x0, y0, x1, y1 = obj.footprint
    parts = []
    labels = []
    if obj.spacing is not None:
        x, y = _grid_positions(obj.footprint, obj.spacing)
        jit = min(obj.spacing / 8.0, Z_JITTER)
        x = x + rng.uniform(-jit, jit, len(x))
        y = y + rng.uniform(-jit, jit, len(y))
    else:
        n = counts[0]
        x = rng.uniform(x0, x1, n)
        y = rng.uniform(y0, y1, n)
    z = obj.roof_z + rng.uniform(0.0, Z_JITTER, len(x))
    parts.append(np.stack([x, y, z], axis=1))
    labels.append(np.full(len(x), obj.class_id, np.uint8))

    wall_cid = obj.class_id if obj.wall_class_id is None else obj.wall_class_id
    for side, n in zip(obj.walls, counts[1:]):
        u = rng.uniform(0.0, 1.0, n)
        z = rng.uniform(obj.base_z, obj.roof_z, n)
        if side == "xmin":
            x, y = np.full(n, x0) + rng.uniform(0, Z_JITTER, n), y0 + u * (y1 - y0)
        elif side == "xmax":
            x, y = np.full(n, x1) - rng.uniform(0, Z_JITTER, n), y0 + u * (y1 - y0)
        elif side == "ymin":
            x, y = x0 + u * (x1 - x0), np.full(n, y0) + rng.uniform(0, Z_JITTER, n)
        else:
            x, y = x0 + u * (x1 - x0), np.full(n, y1) - rng.uniform(0, Z_JITTER, n)
        parts.append(np.stack([x, y, z], axis=1))
        labels.append(np.full(n, wall_cid, np.uint8))
    return np.concatenate(parts), np.concatenate(labels)


def _sample_column(obj: Column, spec: SceneSpec, rng: np.random.Generator):
    (n,) = _surface_counts(obj, spec)
    r = obj.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    x = obj.x + r * np.cos(theta)
    y = obj.y + r * np.sin(theta)
    z = rng.uniform(obj.base_z, obj.base_z + obj.height, n)
    return np.stack([x, y, z], axis=1), np.full(n, obj.class_id, np.uint8)


def generate_city(spec: SceneSpec) -> PointCloud:
    """Build the scene's point cloud; deterministic for a fixed spec."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    xyz_parts, label_parts = [], []
    for obj in spec.objects:
        if isinstance(obj, GroundPlane):
            xyz, labels = _sample_ground(obj, spec, rng)
        elif isinstance(obj, RoofedBox):
            xyz, labels = _sample_box(obj, spec, rng)
        elif isinstance(obj, Column):
            xyz, labels = _sample_column(obj, spec, rng)
        else:
            raise TypeError(f"unknown scene object {type(obj).__name__}")
        xyz_parts.append(xyz)
        label_parts.append(labels)
    xyz = np.concatenate(xyz_parts)
    label = np.concatenate(label_parts)
    noise = rng.integers(-COLOR_NOISE, COLOR_NOISE + 1, size=(len(label), 3))
    rgb = np.clip(PALETTE[label] + noise, 0, 255).astype(np.uint8)
    index = np.arange(len(label), dtype=np.int64)
    return PointCloud(xyz, rgb, label, index)


def single_layer_spec(
    extent: tuple[float, float] = (25.0, 25.0),
    spacing: float = 0.1,
    rng_seed: int = 0,
) -> SceneSpec:
    """A lossless calibration scene: one grid-sampled layer, several classes.

    With spacing >= 2x the pixel size every pixel holds at most one point,
    so projecting and remapping the scene is an exact round trip.
    """
    w, h = extent
    patches = (
        ((0.05 * w, 0.05 * h, 0.40 * w, 0.45 * h), 7),   # traffic road
        ((0.50 * w, 0.10 * h, 0.90 * w, 0.40 * h), 5),   # parking
        ((0.10 * w, 0.55 * h, 0.45 * w, 0.92 * h), 10),  # footpath
        ((0.55 * w, 0.50 * h, 0.95 * w, 0.95 * h), 1),   # vegetation
    )
    ground = GroundPlane(class_id=0, patches=patches, spacing=spacing)
    return SceneSpec(extent=extent, density=1.0 / spacing**2, objects=(ground,), rng_seed=rng_seed)


def random_scene_spec(seed: int, max_points: int = 100_000) -> SceneSpec:
    """Small random city block: ground patches, buildings, trees, cars.

    Deterministic in ``seed``; density is scaled down if the estimated
    point count would exceed ``max_points``.
    """
    rng = np.random.default_rng(seed)
    w = float(rng.uniform(20.0, 45.0))
    h = float(rng.uniform(20.0, 45.0))
    density = float(rng.uniform(15.0, 45.0))

    def rect(min_side: float, max_side: float) -> Rect:
        rw = rng.uniform(min_side, min(max_side, w * 0.6))
        rh = rng.uniform(min_side, min(max_side, h * 0.6))
        x0 = rng.uniform(0.0, w - rw)
        y0 = rng.uniform(0.0, h - rh)
        return (float(x0), float(y0), float(x0 + rw), float(y0 + rh))

    patches = tuple(
        (rect(3.0, 15.0), int(rng.choice([5, 7, 10])))
        for _ in range(rng.integers(1, 4))
    )
    objects: list[SceneObject] = [GroundPlane(class_id=0, patches=patches)]

    for _ in range(rng.integers(1, 4)):  # buildings
        sides = tuple(s for s in WALL_SIDES if rng.random() < 0.4)
        objects.append(
            RoofedBox(
                footprint=rect(4.0, 14.0),
                roof_z=float(rng.uniform(3.0, 9.0)),
                class_id=2,
                walls=sides,
                wall_class_id=3 if sides and rng.random() < 0.5 else None,
            )
        )
    for _ in range(rng.integers(0, 5)):  # trees
        objects.append(
            Column(
                x=float(rng.uniform(1.0, w - 1.0)),
                y=float(rng.uniform(1.0, h - 1.0)),
                radius=float(rng.uniform(0.5, 2.0)),
                height=float(rng.uniform(2.0, 6.0)),
                class_id=1,
            )
        )
    for _ in range(rng.integers(0, 6)):  # cars
        cw, ch = 1.8, 4.4
        x0 = float(rng.uniform(0.0, w - cw))
        y0 = float(rng.uniform(0.0, h - ch))
        objects.append(
            RoofedBox(
                footprint=(x0, y0, x0 + cw, y0 + ch),
                roof_z=float(rng.uniform(1.2, 1.8)),
                class_id=9,
            )
        )

    spec = SceneSpec(extent=(w, h), density=density, objects=tuple(objects), rng_seed=seed)
    estimate = estimate_point_count(spec)
    if estimate > max_points:
        spec = replace(spec, density=density * max_points / estimate * 0.95)
    return spec


def spec_to_dict(spec: SceneSpec) -> dict:
    objects = []
    for obj in spec.objects:
        if isinstance(obj, GroundPlane):
            objects.append(
                {
                    "type": "ground",
                    "class_id": obj.class_id,
                    "z": obj.z,
                    "footprint": list(obj.footprint) if obj.footprint else None,
                    "patches": [[list(r), cid] for r, cid in obj.patches],
                    "spacing": obj.spacing,
                }
            )
        elif isinstance(obj, RoofedBox):
            objects.append(
                {
                    "type": "box",
                    "footprint": list(obj.footprint),
                    "roof_z": obj.roof_z,
                    "class_id": obj.class_id,
                    "walls": list(obj.walls),
                    "wall_class_id": obj.wall_class_id,
                    "base_z": obj.base_z,
                    "spacing": obj.spacing,
                }
            )
        else:
            objects.append(
                {
                    "type": "column",
                    "x": obj.x,
                    "y": obj.y,
                    "radius": obj.radius,
                    "height": obj.height,
                    "class_id": obj.class_id,
                    "base_z": obj.base_z,
                }
            )
    return {
        "extent": list(spec.extent),
        "density": spec.density,
        "rng_seed": spec.rng_seed,
        "objects": objects,
    }


def spec_from_dict(data: dict) -> SceneSpec:
    objects: list[SceneObject] = []
    for entry in data["objects"]:
        kind = entry["type"]
        if kind == "ground":
            objects.append(
                GroundPlane(
                    class_id=entry.get("class_id", 0),
                    z=entry.get("z", 0.0),
                    footprint=tuple(entry["footprint"]) if entry.get("footprint") else None,
                    patches=tuple((tuple(r), cid) for r, cid in entry.get("patches", [])),
                    spacing=entry.get("spacing"),
                )
            )
        elif kind == "box":
            objects.append(
                RoofedBox(
                    footprint=tuple(entry["footprint"]),
                    roof_z=entry["roof_z"],
                    class_id=entry["class_id"],
                    walls=tuple(entry.get("walls", [])),
                    wall_class_id=entry.get("wall_class_id"),
                    base_z=entry.get("base_z", 0.0),
                    spacing=entry.get("spacing"),
                )
            )
        elif kind == "column":
            objects.append(
                Column(
                    x=entry["x"],
                    y=entry["y"],
                    radius=entry["radius"],
                    height=entry["height"],
                    class_id=entry["class_id"],
                    base_z=entry.get("base_z", 0.0),
                )
            )
        else:
            raise ValueError(f"unknown scene object type {kind!r}")
    return SceneSpec(
        extent=tuple(data["extent"]),
        density=data["density"],
        objects=tuple(objects),
        rng_seed=data.get("rng_seed", 0),
    )
