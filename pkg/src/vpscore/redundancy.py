"""Pairwise VP redundancy scores from per-period feature matrices.

Each period contributes a matrix with one row per VP (the concatenation of
that VP's event feature vectors). Columns are standardized, squared
Euclidean distances are taken between rows, averaged over periods, and the
off-diagonal averages are min-max scaled and flipped so that 1 marks the
most redundant pair.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .features import VECTOR_SIZE, vector_positions
from .validation import check_period_tensor, check_vp_ids


class DegenerateScoresError(ValueError):
    pass


@dataclass
class PeriodMatrix:
    period_index: int
    vp_ids: list
    values: np.ndarray
    mask: np.ndarray  # True for live (filled) columns

    @property
    def n_live(self) -> int:
        return int(self.mask.sum())


@dataclass
class RedundancyMatrix:
    vp_ids: list
    scores: np.ndarray
    raw_mean_distances: np.ndarray

    def index(self, vp) -> int:
        return self.vp_ids.index(vp)

    def score(self, a, b) -> float:
        return float(self.scores[self.index(a), self.index(b)])

    def pairs(self):
        n = len(self.vp_ids)
        for i in range(n):
            for j in range(i + 1, n):
                yield (self.vp_ids[i], self.vp_ids[j], float(self.scores[i, j]),
                       float(self.raw_mean_distances[i, j]))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vp_a", "vp_b", "score", "raw_mean_distance"])
        for a, b, s, d in self.pairs():
            w.writerow([a, b, repr(s), repr(d)])

    @classmethod
    def read_csv(cls, fh) -> "RedundancyMatrix":
        rows = list(csv.DictReader(fh))
        vps = sorted({r["vp_a"] for r in rows} | {r["vp_b"] for r in rows})
        idx = {v: i for i, v in enumerate(vps)}
        n = len(vps)
        scores = np.ones((n, n))
        dist = np.zeros((n, n))
        for r in rows:
            i, j = idx[r["vp_a"]], idx[r["vp_b"]]
            scores[i, j] = scores[j, i] = float(r["score"])
            dist[i, j] = dist[j, i] = float(r["raw_mean_distance"])
        return cls(vps, scores, dist)


def assemble_period_matrix(vectors: Mapping, p: int, vp_ids: Sequence | None = None,
                           n_slots: int = 15) -> PeriodMatrix:
    """Concatenate each VP's event vectors of period ``p`` in slot order.

    ``vectors`` maps ``(vp, slot)`` to a 15-dimensional vector. Slots absent
    for every VP are masked (zero-filled); a slot present for only some VPs
    is an error.
    """
    if vp_ids is None:
        vp_ids = sorted({vp for vp, _ in vectors})
    vp_ids = list(vp_ids)
    slot_sets = {vp: frozenset(s for v, s in vectors if v == vp) for vp in vp_ids}
    distinct = set(slot_sets.values())
    if len(distinct) > 1:
        raise ValueError(f"period {p}: VPs disagree on the event-slot set")
    slots = next(iter(distinct)) if distinct else frozenset()
    bad = [s for s in slots if not 0 <= s < n_slots]
    if bad:
        raise ValueError(f"period {p}: slot indices out of range: {bad}")
    values = np.zeros((len(vp_ids), n_slots * VECTOR_SIZE))
    mask = np.zeros(n_slots * VECTOR_SIZE, dtype=bool)
    for s in slots:
        cols = slice(s * VECTOR_SIZE, (s + 1) * VECTOR_SIZE)
        mask[cols] = True
        for r, vp in enumerate(vp_ids):
            values[r, cols] = vectors[(vp, s)]
    return PeriodMatrix(p, vp_ids, values, mask)


class PeriodStandardScaler(TransformerMixin, BaseEstimator):
    """Column-wise standardization with population standard deviation.

    Constant columns become all-zero; columns outside ``mask`` stay zero.
    """

    def __init__(self, constant_tol=1e-12):
        self.constant_tol = constant_tol

    def fit(self, X, y=None, mask=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("expected a 2-D matrix")
        if X.shape[0] < 2:
            raise ValueError("standard scaling needs at least two rows")
        mask = np.ones(X.shape[1], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self.mean_ = np.where(mask, X.mean(axis=0), 0.0)
        std = X.std(axis=0)
        ref = np.maximum(1.0, np.abs(self.mean_))
        self.informative_ = mask & (std > self.constant_tol * ref)
        self.scale_ = np.where(self.informative_, std, 1.0)
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = np.asarray(X, dtype=float)
        out = (X - self.mean_) / self.scale_
        out[:, ~self.informative_] = 0.0
        return out


def standard_scale(matrix: PeriodMatrix) -> PeriodMatrix:
    scaler = PeriodStandardScaler().fit(matrix.values, mask=matrix.mask)
    return PeriodMatrix(matrix.period_index, list(matrix.vp_ids),
                        scaler.transform(matrix.values), matrix.mask.copy())


def pairwise_sq_distance(matrix) -> np.ndarray:
    values = matrix.values if isinstance(matrix, PeriodMatrix) else np.asarray(matrix, float)
    if isinstance(matrix, PeriodMatrix):
        values = values[:, matrix.mask]
    if values.shape[0] < 2:
        return np.zeros((values.shape[0], values.shape[0]))
    return squareform(pdist(values, metric="sqeuclidean"))


def redundancy_scores(distances: Sequence[np.ndarray], vp_ids: Sequence) -> RedundancyMatrix:
    if len(distances) == 0:
        raise ValueError("no period distance matrices")
    stack = np.stack([np.asarray(d, dtype=float) for d in distances])
    n = stack.shape[1]
    if stack.shape[1:] != (n, n) or n != len(vp_ids):
        raise ValueError("distance matrices must be square and match vp_ids")
    mean = stack.sum(axis=0) / len(distances)
    off = ~np.eye(n, dtype=bool)
    if n < 2:
        raise DegenerateScoresError("need at least two VPs")
    lo, hi = mean[off].min(), mean[off].max()
    if hi == lo:
        raise DegenerateScoresError("degenerate score spread: all pair distances equal")
    scores = 1.0 - (mean - lo) / (hi - lo)
    np.fill_diagonal(scores, 1.0)
    np.fill_diagonal(mean, 0.0)
    return RedundancyMatrix(list(vp_ids), scores, mean)


def drop_columns_mask(drop_features, n_slots) -> np.ndarray:
    """Column mask removing feature indices ``drop_features`` from every slot."""
    keep = np.ones(VECTOR_SIZE, dtype=bool)
    for f in drop_features:
        keep[list(vector_positions(f))] = False
    return np.tile(keep, n_slots)


class RedundancyScorer(BaseEstimator):
    """Fit pairwise redundancy scores from a period feature tensor.

    ``X`` has shape ``(n_periods, n_vps, n_slots * 15)``; columns of empty
    event slots are NaN for every VP. ``drop_features`` removes whole
    features (indices 0-8) from every slot, for ablations.

    Fitted attributes: ``vp_ids_``, ``distances_``, ``mean_distances_``,
    ``scores_`` and ``redundancy_`` (a :class:`RedundancyMatrix`).
    """

    def __init__(self, drop_features=()):
        self.drop_features = drop_features

    def fit(self, X, y=None, vp_ids=None):
        X = check_period_tensor(X)
        n_periods, n_vps, n_cols = X.shape
        self.vp_ids_ = check_vp_ids(vp_ids, n_vps)
        n_slots = n_cols // VECTOR_SIZE
        keep = drop_columns_mask(self.drop_features, n_slots)
        distances = []
        for p in range(n_periods):
            live = ~np.isnan(X[p]).any(axis=0) & keep
            pm = PeriodMatrix(p, self.vp_ids_, np.nan_to_num(X[p]), live)
            distances.append(pairwise_sq_distance(standard_scale(pm)))
        self.distances_ = np.stack(distances)
        self.redundancy_ = redundancy_scores(distances, self.vp_ids_)
        self.mean_distances_ = self.redundancy_.raw_mean_distances
        self.scores_ = self.redundancy_.scores
        return self

    def score_matrix(self) -> RedundancyMatrix:
        check_is_fitted(self, "redundancy_")
        return self.redundancy_
