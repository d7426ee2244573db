import json

import numpy as np
import pytest

import oracles
from bevgrid.analysis import class_overlap
from bevgrid.bundles import project_to_dir, read_manifest
from bevgrid.cli import _oracle_predictions
from bevgrid.metrics import evaluate_labels
from bevgrid.pointcloud import PointCloud, UNLABELED
from bevgrid.projection import Bounds, ProjectionConfig, WindowMeta
from bevgrid.remapping import remap, remap_window

SMALL = ProjectionConfig(g_scale=0.05, g_size=10.0, g_step=10.0, cell_side=20.0)


def oracle_setup(tmp_path, cloud, config):
    bundle_dir = tmp_path / "bundles"
    project_to_dir(cloud, config, bundle_dir)
    pred_dir = tmp_path / "pred"
    _oracle_predictions(bundle_dir, pred_dir)
    return bundle_dir, pred_dir


def test_ground_truth_rasters_round_trip_single_layer(tmp_path, single_layer_cloud, default_config):
    bundle_dir, pred_dir = oracle_setup(tmp_path, single_layer_cloud, default_config)
    labels, report = remap(bundle_dir, pred_dir, single_layer_cloud)
    assert np.array_equal(labels, single_layer_cloud.label)
    assert report.outside_windows == 0
    assert report.unpredicted == 0
    assert report.labeled == len(single_layer_cloud)


def test_stacked_points_inherit_the_pixel_class():
    meta = WindowMeta(0, 0, 0.0, 0.0, 4, 4, g_scale=1.0)
    pred = np.full((4, 4), 2, np.uint8)  # the segmenter said building
    labels = remap_window(pred, meta, np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert labels.tolist() == [2, 2]  # roof point and hidden ground point alike


def test_all_unpredicted_propagates(tmp_path, roof_scene, default_config):
    _, cloud = roof_scene
    bundle_dir, pred_dir = oracle_setup(tmp_path, cloud, default_config)
    for png in pred_dir.glob("*_label.png"):
        from PIL import Image

        size = Image.open(png).size
        Image.fromarray(np.full(size[::-1], UNLABELED, np.uint8)).save(png)
    labels, report = remap(bundle_dir, pred_dir, cloud)
    assert (labels == UNLABELED).all()
    assert report.unpredicted == len(cloud)
    assert report.labeled == 0


def test_missing_prediction_is_named(tmp_path, roof_scene, default_config):
    _, cloud = roof_scene
    bundle_dir, pred_dir = oracle_setup(tmp_path, cloud, default_config)
    (pred_dir / "cell0_win0_0_label.png").unlink()
    with pytest.raises(FileNotFoundError, match="cell0_win0_0"):
        remap(bundle_dir, pred_dir, cloud)


def test_duplicate_window_id_rejected(tmp_path, roof_scene, default_config):
    _, cloud = roof_scene
    bundle_dir, _ = oracle_setup(tmp_path, cloud, default_config)
    manifest_path = bundle_dir / "manifest.json"
    data = json.loads(manifest_path.read_text())
    data["windows"].append(dict(data["windows"][0]))
    manifest_path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="duplicate window_id"):
        read_manifest(bundle_dir)


def test_dimension_mismatch_rejected():
    meta = WindowMeta(0, 0, 0.0, 0.0, 8, 8, g_scale=1.0)
    with pytest.raises(ValueError, match="4x4"):
        remap_window(np.zeros((4, 4), np.uint8), meta, np.array([0.5]), np.array([0.5]))


def test_point_outside_window_rejected():
    meta = WindowMeta(0, 0, 0.0, 0.0, 4, 4, g_scale=1.0)
    with pytest.raises(ValueError, match="does not quantize"):
        remap_window(np.zeros((4, 4), np.uint8), meta, np.array([9.5]), np.array([0.5]))


def test_far_edge_point_clamps():
    meta = WindowMeta(0, 0, 0.0, 0.0, 4, 4, g_scale=1.0)
    pred = np.zeros((4, 4), np.uint8)
    pred[3, 3] = 7
    labels = remap_window(pred, meta, np.array([4.0]), np.array([4.0]))
    assert labels.tolist() == [7]


def test_disagreements_are_exactly_the_class_overlap_set(tmp_path, roof_scene):
    _, cloud = roof_scene
    bundle_dir, pred_dir = oracle_setup(tmp_path, cloud, SMALL)
    labels, _ = remap(bundle_dir, pred_dir, cloud)
    differs = labels != cloud.label
    stats = class_overlap(cloud, SMALL)
    assert int(differs.sum()) == stats.disagreements
    # and the disagreeing points are exactly the brute-force overlap set
    winner_rows = oracles.owner_winner_rows(cloud, Bounds.of_cloud(cloud), SMALL)
    brute_differs = np.array(
        [cloud.label[w] != cloud.label[r] for r, w in enumerate(winner_rows)]
    )
    assert np.array_equal(differs, brute_differs)


def test_remapped_miou_equals_the_oracle_bound(tmp_path, roof_scene):
    from bevgrid.analysis import oracle_bound

    _, cloud = roof_scene
    bundle_dir, pred_dir = oracle_setup(tmp_path, cloud, SMALL)
    labels, _ = remap(bundle_dir, pred_dir, cloud)
    assert evaluate_labels(cloud.label, labels).miou == oracle_bound(cloud, SMALL).miou


def test_overlapping_windows_use_smallest_window_id(tmp_path):
    cfg = ProjectionConfig(g_scale=0.1, g_size=10.0, g_step=5.0, cell_side=20.0)
    rng = np.random.default_rng(6)
    n = 2000
    cloud = PointCloud(
        np.column_stack([rng.uniform(0, 20, n), rng.uniform(0, 20, n), rng.uniform(0, 1, n)]),
        np.zeros((n, 3), np.uint8),
        np.zeros(n, np.uint8),
        np.arange(n, dtype=np.int64),
    )
    bundle_dir = tmp_path / "bundles"
    manifest = project_to_dir(cloud, cfg, bundle_dir)
    # give every window a distinct constant prediction
    from PIL import Image

    pred_dir = tmp_path / "pred"
    pred_dir.mkdir()
    for meta in manifest.windows:
        value = meta.window_id % 13
        Image.fromarray(np.full((meta.height_px, meta.width_px), value, np.uint8)).save(
            pred_dir / f"{meta.name}_label.png"
        )
    labels, report = remap(bundle_dir, pred_dir, cloud)
    covers = oracles.cover_assignments(cloud, Bounds.of_cloud(cloud), cfg)
    expected = np.array([c[0][0] % 13 for c in covers], np.uint8)  # smallest id first
    assert np.array_equal(labels, expected)
    assert report.outside_windows == 0


def test_points_outside_the_manifest_bounds_are_counted(tmp_path, roof_scene, default_config):
    _, cloud = roof_scene
    bundle_dir, pred_dir = oracle_setup(tmp_path, cloud, default_config)
    far = PointCloud(
        np.array([[500.0, 500.0, 0.0]]),
        np.zeros((1, 3), np.uint8),
        np.array([0], np.uint8),
        np.array([len(cloud)], np.int64),
    )
    bigger = PointCloud.concat([cloud, far])
    labels, report = remap(bundle_dir, pred_dir, bigger)
    assert report.outside_windows == 1
    assert labels[-1] == UNLABELED
    assert report.total_points == len(cloud) + 1
