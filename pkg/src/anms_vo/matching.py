"""Brute-force L2 descriptor matching with ratio and mutual-consistency filters.

The ratio test compares raw distances (d1 / d2 < ratio, strict) against the
nearest and second-nearest neighbor. With the mutual flag, the test is applied
in both directions and a pair survives only if each side is the other's best
match, which makes match(A, B) and match(B, A) agree on the unordered pairs.
Distance ties are broken by the lowest index before any filtering.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import FeatureSet
from .errors import ValidationError
from .utils import worker_count

_PARALLEL_MIN_ROWS = 512


@dataclass(frozen=True)
class MatchSet:
    """Accepted correspondences between a query and a train feature set."""

    query_indices: np.ndarray
    train_indices: np.ndarray
    distances: np.ndarray
    ratio_threshold: float
    mutual_checked: bool

    def __post_init__(self):
        q = np.ascontiguousarray(np.asarray(self.query_indices, dtype=np.intp))
        t = np.ascontiguousarray(np.asarray(self.train_indices, dtype=np.intp))
        d = np.ascontiguousarray(np.asarray(self.distances, dtype=np.float64))
        if not (q.shape == t.shape == d.shape):
            raise ValidationError("match arrays must share one shape")
        if len(q) and len(np.unique(q)) != len(q):
            raise ValidationError("a query index appears twice")
        if self.mutual_checked and len(t) and len(np.unique(t)) != len(t):
            raise ValidationError("a train index appears twice in a mutual-checked set")
        if len(d) and d.min() < 0:
            raise ValidationError("distances must be non-negative")
        for name, arr in (("query_indices", q), ("train_indices", t), ("distances", d)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.query_indices)

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [
            (int(q), int(t), float(d))
            for q, t, d in zip(self.query_indices, self.train_indices, self.distances)
        ]


def pairwise_l2(query: np.ndarray, train: np.ndarray) -> np.ndarray:
    """Exact (n, m) L2 distance matrix, row-chunked across workers."""
    query = np.asarray(query, dtype=np.float64)
    train = np.asarray(train, dtype=np.float64)
    workers = worker_count()
    if workers == 1 or len(query) < _PARALLEL_MIN_ROWS:
        return cdist(query, train, "euclidean")
    bounds = np.linspace(0, len(query), workers + 1).astype(int)
    out = np.empty((len(query), len(train)))

    def fill(k):
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            out[lo:hi] = cdist(query[lo:hi], train, "euclidean")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fill, range(workers)))
    return out


def _directed_best(dist: np.ndarray, ratio: float):
    """Per-row best column, best distance, and ratio-test verdict."""
    n, m = dist.shape
    best_idx = np.argmin(dist, axis=1)  # lowest index wins ties
    best_d = dist[np.arange(n), best_idx]
    if m < 2:
        passes = np.ones(n, dtype=bool)
    else:
        second_d = np.partition(dist, 1, axis=1)[:, 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            passes = best_d / second_d < ratio
    return best_idx, best_d, passes


def match_descriptors(
    query: np.ndarray,
    train: np.ndarray,
    ratio: float = 0.7,
    mutual: bool = True,
) -> MatchSet:
    """Match two raw descriptor matrices (rows are descriptors)."""
    if not (0.0 < ratio <= 1.0):
        raise ValidationError(f"ratio must be in (0, 1], got {ratio}")
    query = np.atleast_2d(np.asarray(query))
    train = np.atleast_2d(np.asarray(train))
    if query.size and train.size and query.shape[1] != train.shape[1]:
        raise ValidationError(
            f"descriptor dimension mismatch: query {query.shape[1]}, train {train.shape[1]}"
        )
    if len(query) == 0 or len(train) == 0 or query.size == 0 or train.size == 0:
        empty = np.zeros(0, dtype=np.intp)
        return MatchSet(empty, empty, np.zeros(0), ratio, mutual)

    dist = pairwise_l2(query, train)
    f_idx, f_d, f_ok = _directed_best(dist, ratio)
    keep = f_ok
    if mutual:
        b_idx, _, b_ok = _directed_best(dist.T, ratio)
        keep = keep & b_ok[f_idx] & (b_idx[f_idx] == np.arange(len(query)))
    rows = np.flatnonzero(keep)
    return MatchSet(rows, f_idx[rows], f_d[rows], ratio, mutual)


def match(
    query: FeatureSet,
    train: FeatureSet,
    ratio: float = 0.7,
    mutual: bool = True,
) -> MatchSet:
    """Match query descriptors against train descriptors.

    Raises ValidationError on a descriptor dimension mismatch; an empty train
    (or query) set yields an empty MatchSet.
    """
    return match_descriptors(query.descriptors, train.descriptors, ratio, mutual)
