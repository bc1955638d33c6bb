import io
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from vpscore.redundancy import (
    DegenerateScoresError, PeriodMatrix, PeriodStandardScaler, RedundancyMatrix, RedundancyScorer,
    assemble_period_matrix, pairwise_sq_distance, redundancy_scores, standard_scale)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def pm(values, mask=None):
    values = np.asarray(values, dtype=float)
    mask = np.ones(values.shape[1], bool) if mask is None else np.asarray(mask)
    return PeriodMatrix(0, [str(i) for i in range(len(values))], values, mask)


def naive_scale(col):
    n = len(col)
    mean = sum(col) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in col) / n)
    return [0.0] * n if sd == 0 else [(x - mean) / sd for x in col]


def naive_scores(D):
    n = len(D)
    off = [D[i][j] for i in range(n) for j in range(n) if i != j]
    lo, hi = min(off), max(off)
    return [[1.0 if i == j else 1 - (D[i][j] - lo) / (hi - lo) for j in range(n)] for i in range(n)]


def test_scale_closed_form():
    out = standard_scale(pm([[1], [2], [3]])).values[:, 0]
    np.testing.assert_allclose(out, [-math.sqrt(1.5), 0, math.sqrt(1.5)], rtol=1e-12)
    assert out[2] == pytest.approx(1.2247, abs=1e-4)


def test_constant_column_is_zero():
    assert standard_scale(pm([[5], [5], [5]])).values.tolist() == [[0], [0], [0]]


def test_masked_columns_stay_zero():
    out = standard_scale(pm([[1, 9], [2, 7]], mask=[True, False])).values
    assert out[:, 1].tolist() == [0, 0]


def test_single_row_rejected():
    with pytest.raises(ValueError):
        standard_scale(pm([[1, 2]]))


@given(arrays(float, (4, 3), elements=finite))
def test_scale_matches_naive(X):
    out = PeriodStandardScaler().fit_transform(X)
    for c in range(3):
        col = X[:, c].tolist()
        if np.std(X[:, c]) <= 1e-12 * max(1.0, abs(np.mean(X[:, c]))):
            assert (out[:, c] == 0).all()
        else:
            np.testing.assert_allclose(out[:, c], naive_scale(col), rtol=1e-9, atol=1e-9)


@given(arrays(float, (5, 4), elements=finite))
def test_scaling_is_idempotent(X):
    once = PeriodStandardScaler().fit_transform(X)
    twice = PeriodStandardScaler().fit_transform(once)
    np.testing.assert_allclose(twice, once, atol=1e-9)


def test_scaler_estimator_api():
    s = PeriodStandardScaler(constant_tol=1e-6)
    assert s.get_params() == {"constant_tol": 1e-6}
    assert clone(s).constant_tol == 1e-6


def test_squared_distance_literal():
    assert pairwise_sq_distance([[0, 0], [3, 4]])[0, 1] == 25
    assert pairwise_sq_distance([[1, 2], [1, 2]])[0, 1] == 0


@given(arrays(float, (5, 3), elements=finite))
def test_distance_matches_double_loop(X):
    D = pairwise_sq_distance(X)
    for i in range(5):
        for j in range(5):
            assert D[i, j] == pytest.approx(sum((X[i] - X[j]) ** 2), rel=1e-9, abs=1e-9)
    assert np.array_equal(D, D.T)


def test_distance_ignores_masked_columns():
    assert pairwise_sq_distance(pm([[0, 100], [3, -100]], mask=[True, False]))[0, 1] == 9


def test_assemble_shapes_and_masks():
    vecs = {(vp, s): np.full(15, float(s)) for vp in ("a", "b") for s in range(15)}
    m = assemble_period_matrix(vecs, 0)
    assert m.values.shape == (2, 225) and m.n_live == 225
    assert np.array_equal(m.values[0], m.values[1])
    one = assemble_period_matrix({("a", 3): np.ones(15), ("b", 3): np.ones(15)}, 0)
    assert one.n_live == 15 and one.mask[45:60].all()
    assert one.values[:, ~one.mask].sum() == 0
    with pytest.raises(ValueError):
        assemble_period_matrix({("a", 3): np.ones(15), ("b", 4): np.ones(15)}, 0)


def test_score_endpoints():
    D = np.array([[0, 1, 4], [1, 0, 9], [4, 9, 0]], float)
    R = redundancy_scores([D], ["a", "b", "c"])
    assert R.score("a", "b") == 1.0 and R.score("b", "c") == 0.0
    assert R.score("a", "c") == pytest.approx(1 - 3 / 8)
    assert np.diag(R.scores).tolist() == [1, 1, 1]


def test_degenerate_spread():
    D = np.array([[0, 2, 2], [2, 0, 2], [2, 2, 0]], float)
    with pytest.raises(DegenerateScoresError, match="degenerate score spread"):
        redundancy_scores([D], ["a", "b", "c"])


def random_distances(draw_arr):
    A = np.abs(draw_arr)
    D = A + A.T
    np.fill_diagonal(D, 0)
    return D


dist_arrays = arrays(float, (5, 5), elements=st.floats(0, 100, allow_nan=False))


def spread_ok(D):
    off = D[~np.eye(len(D), dtype=bool)]
    return off.max() - off.min() > 1e-6


@given(dist_arrays)
def test_scores_match_naive_and_bounds(A):
    D = random_distances(A)
    assume(spread_ok(D))
    R = redundancy_scores([D], list("abcde"))
    np.testing.assert_allclose(R.scores, naive_scores(D.tolist()), atol=1e-12)
    assert np.array_equal(R.scores, R.scores.T)
    off = R.scores[~np.eye(5, dtype=bool)]
    assert off.min() == 0.0 and off.max() == 1.0


@given(dist_arrays, st.permutations(range(5)))
def test_permutation_invariance(A, perm):
    D = random_distances(A)
    assume(spread_ok(D))
    vps = list("abcde")
    R = redundancy_scores([D], vps)
    Rp = redundancy_scores([D[np.ix_(perm, perm)]], [vps[i] for i in perm])
    for a in vps:
        for b in vps:
            assert Rp.score(a, b) == pytest.approx(R.score(a, b), abs=1e-12)


@given(dist_arrays, st.integers(1, 6))
def test_mean_idempotence(A, P):
    D = random_distances(A)
    assume(spread_ok(D))
    single = redundancy_scores([D], list("abcde")).scores
    np.testing.assert_allclose(redundancy_scores([D] * P, list("abcde")).scores, single, atol=1e-12)


@given(dist_arrays, st.floats(0.001, 50), st.integers(0, 4), st.integers(0, 4))
def test_monotonicity(A, bump, i, j):
    assume(i != j)
    D = random_distances(A)
    assume(spread_ok(D))
    E = D.copy()
    E[i, j] += bump
    E[j, i] += bump
    before = redundancy_scores([D], list("abcde")).scores[i, j]
    after = redundancy_scores([E], list("abcde")).scores[i, j]
    assert after <= before + 1e-12


def test_csv_round_trip():
    D = np.array([[0, 1, 4], [1, 0, 9], [4, 9, 0]], float)
    R = redundancy_scores([D], ["a", "b", "c"])
    buf = io.StringIO()
    R.write_csv(buf)
    assert buf.getvalue().splitlines()[0] == "vp_a,vp_b,score,raw_mean_distance"
    buf.seek(0)
    back = RedundancyMatrix.read_csv(buf)
    assert back.vp_ids == R.vp_ids
    np.testing.assert_array_equal(back.scores, R.scores)
    np.testing.assert_array_equal(back.raw_mean_distances, R.raw_mean_distances)


def test_scorer_on_tensor_with_clone_rows():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 4, 30))
    X[:, 3] = X[:, 1]
    X[1, :, 15:] = np.nan
    sc = RedundancyScorer().fit(X, vp_ids=["a", "b", "c", "d"])
    R = sc.score_matrix()
    assert R.score("b", "d") == 1.0 and R.raw_mean_distances[1, 3] == pytest.approx(0, abs=1e-9)
    assert sc.distances_.shape == (3, 4, 4)


def test_scorer_drop_features_changes_distances():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(2, 3, 15))
    full = RedundancyScorer().fit(X).mean_distances_
    dropped = RedundancyScorer(drop_features=(0,)).fit(X).mean_distances_
    assert not np.allclose(full, dropped)
    assert RedundancyScorer(drop_features=(0,)).get_params() == {"drop_features": (0,)}


@pytest.mark.parametrize("X", [np.zeros((2, 3)), np.zeros((1, 1, 15)), np.zeros((1, 2, 14))])
def test_scorer_rejects_bad_tensors(X):
    with pytest.raises(ValueError):
        RedundancyScorer().fit(X)


def test_scorer_rejects_partially_empty_column():
    X = np.zeros((1, 2, 15))
    X[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="some VPs only"):
        RedundancyScorer().fit(X)
