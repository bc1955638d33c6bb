"""Volume-budgeted greedy selection of least-redundant VPs."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .redundancy import RedundancyMatrix
from .validation import check_alpha, check_budget, check_same_vps

HOUR = 3600
DAY = 86400


class EmptySelectionError(ValueError):
    pass


class UnknownTagError(KeyError):
    pass


@dataclass
class VolumeProfile:
    estimates: dict
    sample_count: int = 1

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        for vp, v in self.estimates.items():
            if not v >= 0:
                raise ValueError(f"negative volume estimate for {vp}")

    def total(self) -> float:
        return float(sum(self.estimates.values()))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vp_id", "volume", "sample_count"])
        for vp in sorted(self.estimates):
            w.writerow([vp, repr(float(self.estimates[vp])), self.sample_count])

    @classmethod
    def read_csv(cls, fh) -> "VolumeProfile":
        rows = list(csv.DictReader(fh))
        count = int(rows[0]["sample_count"]) if rows else 1
        return cls({r["vp_id"]: float(r["volume"]) for r in rows}, count)


@dataclass
class SelectionResult:
    vp_ids: list
    cumulative_volume: list
    alpha: float
    budget: float
    max_redundancy: list = field(default_factory=list)
    volumes: list = field(default_factory=list)

    def __len__(self):
        return len(self.vp_ids)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "vp_id", "max_redundancy_at_pick", "volume", "cumulative_volume"])
        for i, vp in enumerate(self.vp_ids):
            mr = self.max_redundancy[i]
            w.writerow([i + 1, vp, "" if mr is None else repr(mr), repr(self.volumes[i]),
                        repr(self.cumulative_volume[i])])


def sample_hour_windows(start: int, end: int, seed=0, hour=HOUR, day=DAY) -> list[tuple]:
    """One uniformly placed ``hour``-long window in each day of ``[start, end)``."""
    rng = np.random.default_rng(seed)
    out = []
    d = start
    while d + hour <= end:
        span = min(day, end - d) - hour
        off = int(rng.integers(span + 1)) if span > 0 else 0
        out.append((d + off, d + off + hour))
        d += day
    return out


def _timestamps(archive, vp_id) -> list:
    if isinstance(archive, Mapping):
        stream = archive.get(vp_id, ())
    else:
        stream = (u for u in archive if u.vp_id == vp_id)
    return sorted(u.timestamp for u in stream)


def estimate_volume(archive, vp_id, samples: Sequence[tuple]) -> float:
    """Mean number of ``vp_id`` updates per sampled window ``[start, end)``."""
    if not samples:
        raise ValueError("at least one sample window is required")
    ts = _timestamps(archive, vp_id)
    counts = [bisect.bisect_left(ts, b) - bisect.bisect_left(ts, a) for a, b in samples]
    return float(np.mean(counts))


def volume_profile(archive, vp_ids, samples) -> VolumeProfile:
    return VolumeProfile({vp: estimate_volume(archive, vp, samples) for vp in vp_ids}, len(samples))


def candidate_count(alpha: float, n_unselected: int) -> int:
    # round first so 0.1 * 30 does not ceil to 4
    return max(1, math.ceil(round(alpha * n_unselected, 9))) if n_unselected else 0


def greedy_select(R: RedundancyMatrix, volumes: VolumeProfile, alpha=0.25, budget=None) -> SelectionResult:
    """Greedy least-redundant selection under a volume budget.

    The seed is the VP with the lowest summed raw mean distance to all the
    others. Each later step keeps the ``ceil(alpha * |unselected|)``
    unselected VPs whose maximum score against the selection is lowest and
    picks the one with the smallest volume. Selection stops before the first
    pick that would exceed ``budget``. Ties go to the smallest vp_id.
    """
    alpha = check_alpha(alpha)
    budget = check_budget(budget)
    check_same_vps(R, volumes)
    ids = list(R.vp_ids)
    n = len(ids)
    vol = np.array([volumes.estimates[v] for v in ids], dtype=float)
    if n == 0:
        raise EmptySelectionError("no VPs to select from")

    sums = R.raw_mean_distances.sum(axis=1)
    seed = min(range(n), key=lambda i: (sums[i], ids[i]))
    if vol[seed] > budget:
        raise EmptySelectionError(
            f"budget {budget} is below the seed VP {ids[seed]}'s volume {vol[seed]}")

    order, cum, maxr, vols = [seed], [float(vol[seed])], [None], [float(vol[seed])]
    max_red = R.scores[:, seed].astype(float).copy()
    unselected = set(range(n)) - {seed}
    while unselected:
        k = candidate_count(alpha, len(unselected))
        ranked = sorted(unselected, key=lambda i: (max_red[i], ids[i]))
        pool = ranked[:k]
        pick = min(pool, key=lambda i: (vol[i], ids[i]))
        if cum[-1] + vol[pick] > budget:
            break
        order.append(pick)
        maxr.append(float(max_red[pick]))
        vols.append(float(vol[pick]))
        cum.append(cum[-1] + float(vol[pick]))
        unselected.discard(pick)
        np.maximum(max_red, R.scores[:, pick], out=max_red)
    return SelectionResult([ids[i] for i in order], cum, alpha, budget, maxr, vols)


class VPSelector(BaseEstimator):
    """Estimator wrapper around :func:`greedy_select`.

    ``fit(R, volumes)`` stores the pick order in ``selection_`` and
    ``selected_vps_``.
    """

    def __init__(self, alpha=0.25, budget=None):
        self.alpha = alpha
        self.budget = budget

    def fit(self, R, volumes):
        self.selection_ = greedy_select(R, volumes, self.alpha, self.budget)
        self.selected_vps_ = list(self.selection_.vp_ids)
        return self

    def predict(self, k=None) -> list:
        """First ``k`` selected VPs (all when ``k`` is None)."""
        check_is_fitted(self, "selection_")
        return self.selected_vps_[:k] if k is not None else list(self.selected_vps_)


def emit_selection(store: Mapping, year_tag, budget, alpha=0.25):
    """Selection for a precomputed tag.

    ``store`` maps tag to ``(RedundancyMatrix, VolumeProfile)`` or
    ``(RedundancyMatrix, VolumeProfile, scores_csv_path)``.
    Returns ``(SelectionResult, report)``.
    """
    tag = str(year_tag)
    if tag not in store:
        avail = ", ".join(sorted(map(str, store))) or "none"
        raise UnknownTagError(f"no redundancy scores for tag {tag!r}; available: {avail}")
    entry = store[tag]
    R, volumes = entry[0], entry[1]
    result = greedy_select(R, volumes, alpha, budget)
    report = {
        "tag": tag,
        "alpha": result.alpha,
        "budget": result.budget,
        "selected": list(result.vp_ids),
        "cumulative_volume": list(result.cumulative_volume),
        "scores_csv": str(entry[2]) if len(entry) > 2 else None,
    }
    return result, report
