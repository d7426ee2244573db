"""Confusion-matrix accumulation, OA/mAcc/mIoU, and class weighting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import CLASS_NAMES, NUM_CLASSES, UNLABELED, valid_labels


class ConfusionMatrix:
    """K x K count table; rows are ground truth, columns are prediction.

    Pairs where either side is the unlabeled value are excluded from the
    counts and tallied separately, so projection loss can never silently
    inflate a score.
    """

    def __init__(self, num_classes: int = NUM_CLASSES):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), np.int64)
        self.gt_unlabeled = 0
        self.pred_unlabeled = 0

    def add(self, gt, pred) -> "ConfusionMatrix":
        gt = np.asarray(gt)
        pred = np.asarray(pred)
        if gt.shape != pred.shape:
            raise ValueError(f"length mismatch: gt has {gt.size} labels, pred has {pred.size}")
        gt = gt.ravel()
        pred = pred.ravel()
        for name, v in (("gt", gt), ("pred", pred)):
            bad = ~((v < self.num_classes) & (v >= 0) | (v == UNLABELED))
            if bad.any():
                raise ValueError(f"{name} label {v[bad][0]} outside {{0..{self.num_classes - 1}, {UNLABELED}}}")
        gt_excl = gt == UNLABELED
        pred_excl = ~gt_excl & (pred == UNLABELED)
        self.gt_unlabeled += int(gt_excl.sum())
        self.pred_unlabeled += int(pred_excl.sum())
        keep = ~gt_excl & ~pred_excl
        if keep.any():
            key = gt[keep].astype(np.int64) * self.num_classes + pred[keep]
            self.counts += np.bincount(key, minlength=self.num_classes**2).reshape(
                self.num_classes, self.num_classes
            )
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices of different class counts")
        self.counts += other.counts
        self.gt_unlabeled += other.gt_unlabeled
        self.pred_unlabeled += other.pred_unlabeled
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_classes)
        out.counts = self.counts.copy()
        out.gt_unlabeled = self.gt_unlabeled
        out.pred_unlabeled = self.pred_unlabeled
        return out


@dataclass
class MetricsSummary:
    oa: float
    macc: float
    miou: float
    recall: np.ndarray  # per class, NaN where the class never occurs in gt
    iou: np.ndarray  # per class, NaN where absent from both gt and pred
    evaluated: int
    gt_unlabeled: int
    pred_unlabeled: int

    def to_dict(self) -> dict:
        def cell(v: float):
            return None if np.isnan(v) else float(v)

        return {
            "oa": self.oa,
            "macc": self.macc,
            "miou": self.miou,
            "iou": {name: cell(v) for name, v in zip(CLASS_NAMES, self.iou)},
            "recall": {name: cell(v) for name, v in zip(CLASS_NAMES, self.recall)},
            "evaluated_points": self.evaluated,
            "excluded": {
                "gt_unlabeled": self.gt_unlabeled,
                "pred_unlabeled": self.pred_unlabeled,
            },
        }


def summarize(cm: ConfusionMatrix) -> MetricsSummary:
    """OA, mean per-class recall, per-class IoU and their mean.

    Classes absent from both truth and prediction are excluded from mIoU;
    classes present in gt but never predicted score IoU 0. Rows absent
    from gt are excluded from mAcc.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    rowsum = counts.sum(axis=1)
    colsum = counts.sum(axis=0)
    oa = float(diag.sum() / counts.sum())

    recall = np.full(cm.num_classes, np.nan)
    gt_present = rowsum > 0
    recall[gt_present] = diag[gt_present] / rowsum[gt_present]
    macc = float(np.mean(recall[gt_present]))

    union = rowsum + colsum - diag
    iou = np.full(cm.num_classes, np.nan)
    present = union > 0
    iou[present] = diag[present] / union[present]
    miou = float(np.mean(iou[present]))

    return MetricsSummary(
        oa=oa,
        macc=macc,
        miou=miou,
        recall=recall,
        iou=iou,
        evaluated=cm.total,
        gt_unlabeled=cm.gt_unlabeled,
        pred_unlabeled=cm.pred_unlabeled,
    )


def evaluate_labels(gt, pred, num_classes: int = NUM_CLASSES) -> MetricsSummary:
    """Convenience: one-shot confusion build plus summary."""
    return summarize(ConfusionMatrix(num_classes).add(gt, pred))


def label_histogram(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Per-class point counts; unlabeled points are ignored."""
    labels = np.asarray(labels).ravel()
    if not valid_labels(labels).all():
        raise ValueError("labels outside the class table")
    keep = labels != UNLABELED
    return np.bincount(labels[keep].astype(np.int64), minlength=num_classes)[:num_classes]


def class_weights(histogram, offset: float = 1.02) -> np.ndarray:
    """Log-inverse frequency weights: w_c = 1 / ln(offset + count_c / total).

    Zero-count classes get the maximum weight 1 / ln(offset). Weights are
    strictly decreasing in class frequency.
    """
    hist = np.asarray(histogram, np.float64)
    if hist.ndim != 1 or (hist < 0).any():
        raise ValueError("histogram must be a vector of non-negative counts")
    total = hist.sum()
    if total == 0:
        raise ValueError("all-zero histogram")
    return 1.0 / np.log(offset + hist / total)
