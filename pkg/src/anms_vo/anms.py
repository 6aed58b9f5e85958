"""Adaptive non-maximal suppression.

Each keypoint gets a suppression radius: the exact Euclidean pixel distance
to the nearest strictly stronger keypoint (infinite when none exists). The
top-N keypoints by radius form a spatially uniform subset.

Equal scores are resolved by a documented total order (score descending,
then y, x, index ascending); a point counts as "stronger" than every point
after it in that order. This keeps radii well-defined and selection
deterministic even for all-equal-score inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import FeatureSet
from .errors import ValidationError
from .utils import worker_count

# Points are inserted into the kd-tree in batches; batching does not change
# any radius because within-batch candidates are checked pairwise.
_BATCH = 256


@dataclass(frozen=True)
class SuppressionResult:
    """Per-keypoint radii plus the selected top-N index list (selection order)."""

    radii: np.ndarray
    selected: np.ndarray
    n_requested: int

    def __post_init__(self):
        for name in ("radii", "selected"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def strength_order(xy: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Indices sorted by the documented total order, strongest first."""
    n = len(scores)
    # lexsort uses the last key as primary
    return np.lexsort((np.arange(n), xy[:, 0], xy[:, 1], -scores))


def suppression_radii(features: FeatureSet) -> np.ndarray:
    """Exact suppression radius for every keypoint, in input order."""
    n = len(features)
    if n == 0:
        return np.zeros(0)
    xy = features.xy
    order = strength_order(xy, features.scores)
    sorted_xy = xy[order]

    workers = worker_count()
    radii_sq_sorted = np.full(n, np.inf)
    for start in range(0, n, _BATCH):
        stop = min(start + _BATCH, n)
        chunk = sorted_xy[start:stop]
        best = np.full(stop - start, np.inf)
        if start > 0:
            tree = cKDTree(sorted_xy[:start])
            _, nn = tree.query(chunk, k=1, workers=workers)
            # recompute the distance from coordinates so the value is
            # bit-identical to a direct evaluation
            d = chunk - sorted_xy[nn]
            best = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
        if stop - start > 1:
            dx = chunk[:, 0:1] - chunk[:, 0][None, :]
            dy = chunk[:, 1:2] - chunk[:, 1][None, :]
            d2 = dx * dx + dy * dy
            # only earlier (stronger) points within the batch may suppress
            d2[np.triu_indices_from(d2)] = np.inf
            best = np.minimum(best, d2.min(axis=1, initial=np.inf))
        radii_sq_sorted[start:stop] = best

    radii = np.empty(n)
    radii[order] = np.sqrt(radii_sq_sorted)
    return radii


def selection_order(features: FeatureSet, radii: np.ndarray) -> np.ndarray:
    """All indices sorted by (radius desc, score desc, y asc, x asc, index asc)."""
    n = len(features)
    xy = features.xy
    return np.lexsort((np.arange(n), xy[:, 0], xy[:, 1], -features.scores, -radii))


def select_top_n(features: FeatureSet, n: int) -> SuppressionResult:
    """Radii plus the first `n` indices of the documented selection order.

    Deterministic for identical input; `n` larger than the keypoint count
    returns every index.
    """
    if n < 0:
        raise ValidationError(f"selection count must be >= 0, got {n}")
    radii = suppression_radii(features)
    if len(features) == 0:
        return SuppressionResult(radii=radii, selected=np.zeros(0, dtype=np.intp), n_requested=n)
    order = selection_order(features, radii)
    return SuppressionResult(radii=radii, selected=order[: min(n, len(features))], n_requested=n)


def select_features(features: FeatureSet, n: int) -> tuple[FeatureSet, SuppressionResult]:
    """Convenience wrapper: the selected subset as a FeatureSet plus the result."""
    result = select_top_n(features, n)
    return features.subset(result.selected), result
