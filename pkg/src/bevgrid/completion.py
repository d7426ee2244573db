"""Iterative neighborhood filling for sparse bird's-eye-view rasters.

Each pass fills every nodata pixel that has at least one observed pixel
in its kernel neighborhood: color and altitude take the channel-wise
maximum over observed neighbors, the label either the neighborhood
majority (ties to the lowest class id) or the numerically largest
neighbor id. Passes update synchronously from the previous mask, so the
result is independent of pixel visitation order, and observed pixels are
never modified.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .projection import RasterSet

LABEL_STRATEGIES = ("majority", "max-id")


def _check_params(kernel: int, iterations: int) -> None:
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 3, got {kernel}")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")


def _fill_labels_majority(label, mask, fill, kernel):
    """Most frequent label among observed neighbors, ties to the lowest id."""
    candidates = np.unique(label[mask])
    votes = np.empty((len(candidates), *label.shape), np.int32)
    footprint = np.ones((kernel, kernel), np.int32)
    for i, cid in enumerate(candidates):
        votes[i] = ndimage.correlate(
            ((label == cid) & mask).astype(np.int32), footprint, mode="constant", cval=0
        )
    # argmax returns the first maximum; candidates are sorted ascending
    return candidates[np.argmax(votes, axis=0)[fill]]


def _fill_labels_max_id(label, mask, fill, kernel):
    masked_ids = np.where(mask, label, 0)
    filled = ndimage.maximum_filter(masked_ids, size=kernel, mode="constant", cval=0)
    return filled[fill]


def complete(
    raster: RasterSet,
    iterations: int,
    kernel: int = 3,
    label_strategy: str = "majority",
) -> RasterSet:
    """Densify a raster by ``iterations`` fill passes; the input is untouched.

    iterations=0 is the identity, and so is any run on an already dense
    raster. Filled pixels keep winner_index at the nodata sentinel since
    no point ever produced them.
    """
    _check_params(kernel, iterations)
    if label_strategy not in LABEL_STRATEGIES:
        raise ValueError(f"label_strategy must be one of {LABEL_STRATEGIES}")
    out = raster.copy()
    for _ in range(iterations):
        mask = out.mask
        if mask.all() or not mask.any():
            break
        reach = ndimage.maximum_filter(mask, size=kernel, mode="constant", cval=False)
        fill = reach & ~mask
        if not fill.any():
            break
        for c in range(3):
            channel = np.where(mask, out.rgb[:, :, c], 0)
            grown = ndimage.maximum_filter(channel, size=kernel, mode="constant", cval=0)
            out.rgb[:, :, c][fill] = grown[fill]
        alt = np.where(mask, out.alt, -np.inf)
        grown_alt = ndimage.maximum_filter(alt, size=kernel, mode="constant", cval=-np.inf)
        out.alt[fill] = grown_alt[fill]
        if label_strategy == "majority":
            out.label[fill] = _fill_labels_majority(out.label, mask, fill, kernel)
        else:
            out.label[fill] = _fill_labels_max_id(out.label, mask, fill, kernel)
        out.mask = mask | fill
    return out


def fixpoint_iterations(raster: RasterSet, kernel: int = 3) -> int:
    """Smallest pass count after which no nodata pixel remains.

    Equals the maximum Chebyshev distance from any pixel to the nearest
    observed pixel, divided by the kernel radius, rounded up.
    """
    _check_params(kernel, 0)
    if not raster.mask.any():
        raise ValueError("raster has no observed pixels; completion can never converge")
    if raster.mask.all():
        return 0
    dist = ndimage.distance_transform_cdt(~raster.mask, metric="chessboard")
    radius = (kernel - 1) // 2
    return math.ceil(int(dist.max()) / radius)
