import math

import numpy as np
import pytest

import oracles
from bevgrid.metrics import (
    ConfusionMatrix,
    class_weights,
    evaluate_labels,
    label_histogram,
    summarize,
)


def test_direct_counts():
    cm = ConfusionMatrix().add([0, 0, 1], [0, 1, 1])
    assert cm.counts[0, 0] == 1
    assert cm.counts[0, 1] == 1
    assert cm.counts[1, 1] == 1
    assert cm.total == 3


def test_perfect_prediction_diagonal():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 13, 500)
    cm = ConfusionMatrix().add(labels, labels)
    assert np.trace(cm.counts) == 500
    s = summarize(cm)
    assert s.oa == s.macc == s.miou == 1.0


def test_merge_equals_single_pass():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 400))
        cut = int(rng.integers(0, n + 1))
        gt = rng.choice([*range(13), 255], size=n)
        pred = rng.choice([*range(13), 255], size=n)
        merged = ConfusionMatrix().add(gt[:cut], pred[:cut]).merge(
            ConfusionMatrix().add(gt[cut:], pred[cut:])
        )
        whole = ConfusionMatrix().add(gt, pred)
        assert np.array_equal(merged.counts, whole.counts)
        assert merged.gt_unlabeled == whole.gt_unlabeled
        assert merged.pred_unlabeled == whole.pred_unlabeled


def test_merge_is_associative_and_commutative():
    rng = np.random.default_rng(2)
    parts = [
        (rng.integers(0, 13, 100), rng.integers(0, 13, 100))
        for _ in range(3)
    ]
    mats = [ConfusionMatrix().add(g, p) for g, p in parts]
    ab_c = mats[0].copy().merge(mats[1]).merge(mats[2])
    a_bc = mats[1].copy().merge(mats[2]).merge(mats[0])
    assert np.array_equal(ab_c.counts, a_bc.counts)


def test_hand_computed_two_class_matrix():
    cm = ConfusionMatrix(num_classes=2)
    cm.counts = np.array([[5, 5], [0, 10]], np.int64)
    s = summarize(cm)
    assert abs(s.oa - 0.75) < 1e-12
    assert abs(s.iou[0] - 0.5) < 1e-12
    assert abs(s.iou[1] - 10 / 15) < 1e-12
    assert abs(s.miou - (0.5 + 10 / 15) / 2) < 1e-12
    assert abs(s.macc - 0.75) < 1e-12


def test_absent_class_conventions():
    cm = ConfusionMatrix(num_classes=4)
    # class 0 perfect, class 1 present in gt but never predicted (pred said 0),
    # class 2 absent everywhere, class 3 only ever predicted
    cm.counts = np.array(
        [[8, 0, 0, 0], [5, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], np.int64
    )
    cm.counts[0, 3] = 2
    s = summarize(cm)
    assert s.iou[1] == 0.0  # present but unpredicted scores zero
    assert np.isnan(s.iou[2])  # absent from both sides: excluded
    assert s.iou[3] == 0.0  # prediction-only class counts as zero
    assert np.isnan(s.recall[2]) and np.isnan(s.recall[3])
    assert s.miou == pytest.approx((8 / 15 + 0.0 + 0.0) / 3, abs=1e-12)


def test_unlabeled_pairs_are_excluded_but_tallied():
    cm = ConfusionMatrix().add([0, 255, 1, 2], [0, 3, 255, 2])
    assert cm.total == 2  # only the (0,0) and (2,2) pairs count
    assert cm.gt_unlabeled == 1
    assert cm.pred_unlabeled == 1
    s = summarize(cm)
    assert s.evaluated == 2
    d = s.to_dict()
    assert d["excluded"] == {"gt_unlabeled": 1, "pred_unlabeled": 1}


def test_label_validation():
    with pytest.raises(ValueError, match="length mismatch"):
        ConfusionMatrix().add([0, 1], [0])
    with pytest.raises(ValueError, match="outside"):
        ConfusionMatrix().add([0, 13], [0, 0])
    with pytest.raises(ValueError, match="empty"):
        summarize(ConfusionMatrix())


def test_miou_never_exceeds_macc():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        cm = ConfusionMatrix()
        cm.counts = rng.integers(0, 40, (13, 13)).astype(np.int64)
        # randomly blank some rows/columns to hit the absent-class paths
        for c in rng.integers(0, 13, 3):
            cm.counts[c, :] = 0
        if cm.total == 0:
            continue
        s = summarize(cm)
        assert s.miou <= s.macc + 1e-12
        assert 0.0 <= s.miou <= 1.0
        assert 0.0 <= s.macc <= 1.0
        assert 0.0 <= s.oa <= 1.0


def test_summary_matches_per_point_recount():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(50, 500))
        gt = rng.integers(0, 13, n)
        pred = np.where(rng.random(n) < 0.7, gt, rng.integers(0, 13, n))
        s = evaluate_labels(gt, pred)
        oa, macc, miou = oracles.metrics_from_pairs(gt, pred)
        assert abs(s.oa - oa) < 1e-12
        assert abs(s.macc - macc) < 1e-12
        assert abs(s.miou - miou) < 1e-12


# ----------------------------------------------------------------- weights


def test_uniform_histogram_gives_equal_weights():
    w = class_weights(np.full(13, 100))
    assert np.allclose(w, 1.0 / math.log(1.02 + 1.0 / 13.0), atol=1e-15)


def test_two_class_hand_values():
    w = class_weights(np.array([9000, 1000]))
    assert w[0] == pytest.approx(1.0 / math.log(1.92), abs=1e-12)  # ~1.533
    assert w[1] == pytest.approx(1.0 / math.log(1.12), abs=1e-12)  # ~8.824
    assert w[0] == pytest.approx(1.533, abs=2e-3)
    assert w[1] == pytest.approx(8.824, abs=2e-3)


def test_zero_count_class_gets_max_weight():
    w = class_weights(np.array([10, 0, 5]))
    assert w[1] == pytest.approx(1.0 / math.log(1.02), abs=1e-12)
    assert w[1] == w.max()


def test_weights_strictly_decrease_with_frequency():
    rng = np.random.default_rng(5)
    for _ in range(100):
        hist = rng.integers(0, 10_000, 13)
        if hist.sum() == 0:
            continue
        w = class_weights(hist)
        order = np.argsort(hist, kind="stable")
        sorted_hist = hist[order]
        sorted_w = w[order]
        for i in range(12):
            if sorted_hist[i + 1] > sorted_hist[i]:
                assert sorted_w[i + 1] < sorted_w[i]
            elif sorted_hist[i + 1] == sorted_hist[i]:
                assert sorted_w[i + 1] == sorted_w[i]


def test_weights_errors():
    with pytest.raises(ValueError, match="all-zero"):
        class_weights(np.zeros(13))
    with pytest.raises(ValueError, match="non-negative"):
        class_weights(np.array([3, -1]))


def test_label_histogram_skips_unlabeled():
    hist = label_histogram(np.array([0, 0, 5, 255, 255, 12], np.uint8))
    assert hist[0] == 2 and hist[5] == 1 and hist[12] == 1
    assert hist.sum() == 4
