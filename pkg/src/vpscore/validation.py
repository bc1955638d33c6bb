"""Input validation shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np

from .features import VECTOR_SIZE


def check_period_tensor(X) -> np.ndarray:
    """Validate a ``(n_periods, n_vps, n_slots * 15)`` feature tensor.

    NaN marks an empty event slot and must cover a column for every VP.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected a 3-D tensor (periods, vps, columns), got ndim={X.ndim}")
    n_periods, n_vps, n_cols = X.shape
    if n_periods < 1:
        raise ValueError("need at least one period")
    if n_vps < 2:
        raise ValueError("need at least two VPs")
    if n_cols == 0 or n_cols % VECTOR_SIZE:
        raise ValueError(f"column count {n_cols} is not a multiple of {VECTOR_SIZE}")
    if np.isinf(X).any():
        raise ValueError("feature tensor contains infinite values")
    nan = np.isnan(X)
    partial = nan.any(axis=1) & ~nan.all(axis=1)
    if partial.any():
        p, c = np.argwhere(partial)[0]
        raise ValueError(f"period {p} column {c} is empty for some VPs only")
    return X


def check_vp_ids(vp_ids, n) -> list:
    if vp_ids is None:
        return [str(i) for i in range(n)]
    vp_ids = [str(v) for v in vp_ids]
    if len(vp_ids) != n:
        raise ValueError(f"{len(vp_ids)} vp_ids for {n} rows")
    if len(set(vp_ids)) != n:
        raise ValueError("vp_ids must be unique")
    return vp_ids


def check_alpha(alpha) -> float:
    if not isinstance(alpha, numbers.Real) or not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")
    return float(alpha)


def check_budget(budget) -> float:
    if budget is None:
        return float("inf")
    if not isinstance(budget, numbers.Real) or not budget > 0:
        raise ValueError(f"budget must be positive, got {budget!r}")
    return float(budget)


def check_same_vps(redundancy, volumes) -> None:
    a, b = set(redundancy.vp_ids), set(volumes.estimates)
    if a != b:
        missing = sorted(a ^ b)[:5]
        raise ValueError(f"score matrix and volume profile cover different VPs, e.g. {missing}")
