import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vpscore.ingest import ANNOUNCE, BgpUpdate
from vpscore.redundancy import redundancy_scores
from vpscore.selection import (
    EmptySelectionError, UnknownTagError, VolumeProfile, VPSelector, candidate_count,
    emit_selection, estimate_volume, greedy_select, sample_hour_windows)


def upd(t, vp="a"):
    return BgpUpdate(t, vp, ANNOUNCE, "p", (1,))


def test_volume_examples():
    ups = [upd(h * 3600 + i) for h in range(3) for i in range(10)]
    hours = [(h * 3600, (h + 1) * 3600) for h in range(3)]
    assert estimate_volume(ups, "a", hours) == 10.0
    assert estimate_volume(ups, "zz", hours) == 0.0
    ups = [upd(3600 + i) for i in range(20)] + [upd(7200 + i) for i in range(10)]
    assert estimate_volume(ups, "a", hours) == 10.0
    with pytest.raises(ValueError):
        estimate_volume(ups, "a", [])


def test_volume_profile_validation():
    with pytest.raises(ValueError):
        VolumeProfile({"a": -1.0})
    with pytest.raises(ValueError):
        VolumeProfile({"a": 1.0}, sample_count=0)


def test_hour_windows_one_per_day():
    wins = sample_hour_windows(0, 5 * 86400, seed=4)
    assert len(wins) == 5
    for d, (a, b) in enumerate(wins):
        assert b - a == 3600 and d * 86400 <= a and b <= (d + 1) * 86400
    assert wins == sample_hour_windows(0, 5 * 86400, seed=4)


def make(D, vols):
    ids = [f"v{i}" for i in range(len(D))]
    R = redundancy_scores([np.asarray(D, float)], ids)
    return R, VolumeProfile(dict(zip(ids, map(float, vols))))


def naive_greedy(R, volumes, alpha, budget=math.inf):
    """Direct transcription of the selection rule with no incremental state."""
    ids = R.vp_ids
    sums = {v: sum(R.raw_mean_distances[R.index(v)]) for v in ids}
    chosen = [min(ids, key=lambda v: (sums[v], v))]
    total = volumes.estimates[chosen[0]]
    while len(chosen) < len(ids):
        rest = [v for v in ids if v not in chosen]
        P = {v: max(R.score(v, s) for s in chosen) for v in rest}
        K = sorted(rest, key=lambda v: (P[v], v))[:math.ceil(round(alpha * len(rest), 9))]
        pick = min(K, key=lambda v: (volumes.estimates[v], v))
        if total + volumes.estimates[pick] > budget:
            break
        total += volumes.estimates[pick]
        chosen.append(pick)
    return chosen


sym_dist = arrays(float, (6, 6), elements=st.floats(0, 50, allow_nan=False)).map(
    lambda A: np.triu(A, 1) + np.triu(A, 1).T)
vol_lists = st.lists(st.integers(0, 20), min_size=6, max_size=6)
alphas = st.sampled_from([0.1, 0.25, 0.5, 0.75, 1.0])


def spread(D):
    off = D[~np.eye(len(D), dtype=bool)]
    return off.max() > off.min()


@given(sym_dist, vol_lists, alphas)
def test_matches_naive_greedy(D, vols, alpha):
    assume(spread(D))
    R, V = make(D, vols)
    assert greedy_select(R, V, alpha).vp_ids == naive_greedy(R, V, alpha)


@given(sym_dist, vol_lists, alphas, st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_prefix_property(D, vols, alpha, f1, f2):
    assume(spread(D))
    R, V = make(D, vols)
    assume(V.total() > 0)
    lo, hi = sorted((f1, f2))
    first = R.vp_ids[int(np.argmin(R.raw_mean_distances.sum(axis=1)))]
    assume(V.estimates[first] <= lo * V.total())
    small = greedy_select(R, V, alpha, lo * V.total()).vp_ids
    big = greedy_select(R, V, alpha, hi * V.total()).vp_ids
    full = greedy_select(R, V, alpha).vp_ids
    assert big[:len(small)] == small and full[:len(big)] == big


@given(sym_dist, vol_lists, alphas)
def test_cumulative_volume_and_budget(D, vols, alpha):
    assume(spread(D))
    R, V = make(D, vols)
    assume(V.total() > 0)
    res = greedy_select(R, V, alpha, budget=V.total() / 2 + max(vols))
    assert all(a <= b for a, b in zip(res.cumulative_volume, res.cumulative_volume[1:]))
    assert res.cumulative_volume[-1] <= res.budget
    assert len(greedy_select(R, V, alpha, budget=V.total()).vp_ids) == 6


@given(sym_dist, vol_lists, alphas)
def test_redundancy_priority(D, vols, alpha):
    assume(spread(D))
    R, V = make(D, vols)
    res = greedy_select(R, V, alpha)
    for step in range(1, len(res.vp_ids)):
        chosen = res.vp_ids[:step]
        rest = [v for v in R.vp_ids if v not in chosen]
        P = {v: max(R.score(v, s) for s in chosen) for v in rest}
        K = sorted(rest, key=lambda v: (P[v], v))[:candidate_count(alpha, len(rest))]
        pick = res.vp_ids[step]
        assert pick in K
        assert all(P[pick] <= P[v] for v in rest if v not in K)
        assert res.max_redundancy[step] == pytest.approx(P[pick])


@given(sym_dist, vol_lists)
def test_alpha_one_is_volume_greedy(D, vols):
    assume(spread(D))
    R, V = make(D, vols)
    res = greedy_select(R, V, 1.0)
    rest = sorted((v for v in R.vp_ids if v != res.vp_ids[0]), key=lambda v: (V.estimates[v], v))
    assert res.vp_ids[1:] == rest


def test_clone_pair_exhaustive():
    """A, B clones and C distinct; checked over every seed, volume order and small alpha."""
    for seed_vp, vols, alpha in itertools.product(range(3), itertools.permutations([1, 2, 3]),
                                                  [0.1, 0.25, 0.5]):
        D = np.array([[0, 0, 9], [0, 0, 9], [9, 9, 0]], float)
        # make the requested VP the seed by shrinking its row sum
        D[seed_vp] -= 0.5 * (D[seed_vp] > 0)
        D[:, seed_vp] = D[seed_vp]
        R, V = make(D, vols)
        order = greedy_select(R, V, alpha).vp_ids
        assert order.index("v2") < max(order.index("v0"), order.index("v1"))


def test_candidate_count():
    assert candidate_count(0.25, 8) == 2
    assert candidate_count(0.25, 9) == 3
    assert candidate_count(0.1, 30) == 3
    assert candidate_count(0.01, 3) == 1
    assert candidate_count(0.5, 0) == 0


def test_ties_break_by_vp_id():
    D = np.array([[0, 1, 1, 2], [1, 0, 1, 2], [1, 1, 0, 2], [2, 2, 2, 0]], float)
    R, V = make(D, [1, 1, 1, 1])
    assert greedy_select(R, V, 1.0).vp_ids == ["v0", "v1", "v2", "v3"]


def test_budget_below_seed_volume():
    R, V = make([[0, 1, 2], [1, 0, 3], [2, 3, 0]], [5, 1, 1])
    with pytest.raises(EmptySelectionError):
        greedy_select(R, V, budget=4)


@pytest.mark.parametrize("alpha", [0, -0.1, 1.5])
def test_bad_alpha(alpha):
    R, V = make([[0, 1, 2], [1, 0, 3], [2, 3, 0]], [1, 1, 1])
    with pytest.raises(ValueError):
        greedy_select(R, V, alpha)


def test_mismatched_vp_sets():
    R, _ = make([[0, 1, 2], [1, 0, 3], [2, 3, 0]], [1, 1, 1])
    with pytest.raises(ValueError):
        greedy_select(R, VolumeProfile({"v0": 1.0}))


def test_selector_estimator_and_report_csv():
    R, V = make([[0, 1, 2], [1, 0, 3], [2, 3, 0]], [3, 1, 2])
    sel = VPSelector(alpha=0.5).fit(R, V)
    assert sel.get_params() == {"alpha": 0.5, "budget": None}
    assert sel.predict(2) == sel.selected_vps_[:2]
    buf = io.StringIO()
    sel.selection_.write_csv(buf)
    assert buf.getvalue().splitlines()[0] == "rank,vp_id,max_redundancy_at_pick,volume,cumulative_volume"


def test_emit_selection_and_unknown_tag():
    R, V = make([[0, 1, 2], [1, 0, 3], [2, 3, 0]], [3, 1, 2])
    store = {"2023": (R, V)}
    a, rep = emit_selection(store, 2023, budget=V.total())
    b, _ = emit_selection(store, "2023", budget=V.total())
    assert a.vp_ids == b.vp_ids and rep["selected"] == a.vp_ids
    with pytest.raises(UnknownTagError, match="2023"):
        emit_selection(store, "1999", budget=1)


def test_volume_csv_round_trip():
    V = VolumeProfile({"b": 2.5, "a": 1.0}, 4)
    buf = io.StringIO()
    V.write_csv(buf)
    buf.seek(0)
    assert VolumeProfile.read_csv(buf) == V
