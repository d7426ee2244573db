import numpy as np
import pytest

from bevgrid import ProjectionConfig, generate_city, single_layer_spec
from bevgrid.pointcloud import PointCloud
from bevgrid.synthetic import Column, GroundPlane, RoofedBox, SceneSpec


@pytest.fixture(scope="session")
def default_config():
    return ProjectionConfig()


@pytest.fixture(scope="session")
def single_layer_cloud():
    """25 x 25 m grid scene, at most one point per default pixel."""
    return generate_city(single_layer_spec(rng_seed=11))


@pytest.fixture(scope="session")
def roof_scene():
    """Ground plus one wall-less roof: controlled vertical stacking."""
    spec = SceneSpec(
        extent=(20.0, 20.0),
        density=30.0,
        objects=(
            GroundPlane(class_id=0),
            RoofedBox(footprint=(5.0, 5.0, 15.0, 15.0), roof_z=5.0, class_id=2),
        ),
        rng_seed=21,
    )
    return spec, generate_city(spec)


@pytest.fixture(scope="session")
def mixed_cloud():
    """Ground, roofed building, trees and a car; a bit of everything."""
    spec = SceneSpec(
        extent=(30.0, 24.0),
        density=25.0,
        objects=(
            GroundPlane(class_id=0, patches=(((2.0, 2.0, 14.0, 10.0), 7),)),
            RoofedBox(
                footprint=(16.0, 4.0, 26.0, 12.0),
                roof_z=6.0,
                class_id=2,
                walls=("xmin", "ymax"),
                wall_class_id=3,
            ),
            Column(x=6.0, y=16.0, radius=1.5, height=4.0, class_id=1),
            Column(x=24.0, y=18.0, radius=1.0, height=3.0, class_id=1),
            RoofedBox(footprint=(10.0, 18.0, 11.8, 22.4), roof_z=1.5, class_id=9),
        ),
        rng_seed=5,
    )
    return generate_city(spec)


def paired_stack_cloud(n_side=40, spacing=0.2, roof_fraction=0.5, roof_z=5.0):
    """Grid ground layer plus roof points at exactly the same (x, y) over
    the first ``roof_fraction`` of columns: every roof pixel holds exactly
    one ground/roof pair at any probe scale below the spacing."""
    rng = np.random.default_rng(99)
    jitter = spacing / 8.0
    base = (np.arange(n_side) + 0.25) * spacing
    gx, gy = np.meshgrid(base, base, indexing="ij")
    x = gx.ravel() + rng.uniform(-jitter, jitter, n_side * n_side)
    y = gy.ravel() + rng.uniform(-jitter, jitter, n_side * n_side)
    z = rng.uniform(0.0, 0.01, n_side * n_side)
    under = x < n_side * spacing * roof_fraction
    xs = np.concatenate([x, x[under]])
    ys = np.concatenate([y, y[under]])
    zs = np.concatenate([z, np.full(under.sum(), roof_z)])
    labels = np.concatenate([np.zeros(len(x), np.uint8), np.full(under.sum(), 2, np.uint8)])
    n = len(xs)
    return PointCloud(
        np.stack([xs, ys, zs], axis=1),
        np.zeros((n, 3), np.uint8),
        labels,
        np.arange(n, dtype=np.int64),
    )


def shuffled(cloud: PointCloud, seed: int = 0) -> PointCloud:
    """Same cloud, new row order; indices travel with their points."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(cloud))
    return cloud[perm]


def random_raster(rng, height=24, width=24, density=0.35):
    """RasterSet with a random mask and consistent nodata conventions."""
    from bevgrid.projection import NO_POINT, RasterSet

    mask = rng.random((height, width)) < density
    rgb = rng.integers(0, 256, (height, width, 3)).astype(np.uint8)
    alt = rng.uniform(-3.0, 9.0, (height, width))
    label = rng.integers(0, 13, (height, width)).astype(np.uint8)
    winner = rng.integers(0, 10_000, (height, width)).astype(np.int64)
    rgb[~mask] = 0
    alt[~mask] = 0.0
    label[~mask] = 255
    winner[~mask] = NO_POINT
    return RasterSet(rgb=rgb, alt=alt, label=label, mask=mask, winner_index=winner)
