import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vpscore.events import (
    CATEGORY_PAIRS, AsCategory, CandidateEvent, balanced_sample, category_pair, classify_all,
    classify_as, customer_cones, detect_candidates, read_candidates, read_event_set,
    write_candidates, write_event_set)
from vpscore.ingest import ANNOUNCE, BgpUpdate, RibTable, Route

from .strategies import streams

VPS = [f"v{i}" for i in range(10)]


def adopt(vps, link_path, t0=0, step=30, prefix="q"):
    return [BgpUpdate(t0 + i * step, vp, ANNOUNCE, prefix, link_path) for i, vp in enumerate(vps)]


def snapshots():
    return {vp: RibTable(vp, 0, {"base": Route((1, 2), frozenset(), 0)}) for vp in VPS}


def test_fifteen_category_pairs():
    assert len(CATEGORY_PAIRS) == 15
    assert sum(a == b for a, b in CATEGORY_PAIRS) == 5


def test_category_ids():
    assert [int(c) for c in AsCategory] == [1, 2, 3, 4, 5]
    assert category_pair(5, 1) == (AsCategory.STUB, AsCategory.TIER1)


REL = {10: {20, 30}, 20: {40}, 30: set(), 40: set(), 50: {60}, 60: set()}


def test_classify_examples():
    cones = customer_cones(REL)
    assert cones == {10: 4, 20: 2, 30: 1, 40: 1, 50: 2, 60: 1}
    assert classify_as(40, REL, cones) is AsCategory.STUB
    assert classify_as(40, REL, cones, tier1_list={40}, hypergiant_list={40}) is AsCategory.TIER1
    assert classify_as(40, REL, cones, hypergiant_list={40}) is AsCategory.HYPERGIANT
    assert classify_as(999, REL, cones) is AsCategory.STUB
    # transit cones 4, 2, 2 average to 8/3
    assert classify_as(20, REL, cones) is AsCategory.TRANSIT1
    assert classify_as(10, REL, cones) is AsCategory.TRANSIT2


def test_transit1_threshold():
    assert classify_as(1, {1: {2}}, {1: 3}, average_cone=10) is AsCategory.TRANSIT1
    assert classify_as(1, {1: {2}}, {1: 10}, average_cone=10) is AsCategory.TRANSIT2


def test_classify_all_covers_customers_and_lists():
    cls = classify_all(REL, tier1_list=[70], extra_asns=[80])
    assert set(cls) == {10, 20, 30, 40, 50, 60, 70, 80}
    assert cls[70] is AsCategory.TIER1 and cls[80] is AsCategory.STUB


def test_three_of_ten_adopt():
    cands = detect_candidates(adopt(VPS[:3], (7, 8)), vp_count=10, snapshots=snapshots())
    assert len(cands) == 1
    assert cands[0].link == (7, 8) and cands[0].observer_count == 3 and cands[0].first_seen == 0


def test_one_of_ten_adopts():
    assert detect_candidates(adopt(VPS[:1], (7, 8)), vp_count=10, snapshots=snapshots()) == []


def test_six_of_ten_adopt():
    assert detect_candidates(adopt(VPS[:6], (7, 8)), vp_count=10, snapshots=snapshots()) == []


def test_five_of_ten_is_not_fewer_than_half():
    assert detect_candidates(adopt(VPS[:5], (7, 8)), vp_count=10, snapshots=snapshots()) == []


def test_adoptions_outside_window_do_not_combine():
    ups = adopt(VPS[:2], (7, 8), step=700)
    assert detect_candidates(ups, vp_count=10, snapshots=snapshots()) == []


def test_link_already_known_is_not_new():
    snaps = snapshots()
    for vp in VPS[:3]:
        snaps[vp] = RibTable(vp, 0, {"base": Route((7, 8), frozenset(), 0)})
    assert detect_candidates(adopt(VPS[:3], (7, 8)), vp_count=10, snapshots=snaps) == []


def test_empty_stream():
    assert detect_candidates([], vp_count=10) == []


@given(streams(vp_ids=tuple(VPS), max_size=150))
def test_observer_bounds_hold(stream):
    for c in detect_candidates(stream, vp_count=10, window=600):
        assert 2 <= c.observer_count and 2 * c.observer_count < 10
        assert c.as1 < c.as2


def pool(n_periods, start=0, window=600, per_pair=2):
    """Candidates for every category pair in each of ``n_periods`` windows."""
    cls, cands = {}, []
    asn = 100
    for p in range(n_periods):
        for pair in CATEGORY_PAIRS:
            for k in range(per_pair):
                a, b = asn, asn + 1
                asn += 2
                cls[a], cls[b] = pair
                cands.append(CandidateEvent((a, b), f"p{k}", start + p * window + 5 * k,
                                            frozenset({"x", "y"})))
    return cands, cls


def test_full_fill_is_balanced():
    cands, cls = pool(40)
    es = balanced_sample(cands, cls, P=20, timeframe=(0, 40 * 600), rng_seed=3)
    assert len(es.events) == 300 and es.fill_rate() == 1.0
    assert set(es.pair_counts().values()) == {20}
    assert es.fully_filled_periods() == list(range(20))


def test_sample_is_deterministic():
    cands, cls = pool(30)
    a = balanced_sample(cands, cls, P=10, timeframe=(0, 30 * 600), rng_seed=7)
    b = balanced_sample(list(reversed(cands)), cls, P=10, timeframe=(0, 30 * 600), rng_seed=7)
    assert a == b


@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_periods_never_overlap_and_contain_their_events(seed, P):
    cands, cls = pool(25)
    es = balanced_sample(cands, cls, P=P, timeframe=(0, 25 * 600), rng_seed=seed)
    starts = sorted(es.periods)
    assert all(b - a >= 600 for a, b in zip(starts, starts[1:]))
    for (p, slot), ev in es.events.items():
        assert es.periods[p] <= ev.first_seen < es.periods[p] + 600
        assert CATEGORY_PAIRS[slot] == ev.category_pair
    assert len(es.events) == 15 * P


def test_sparse_pool_leaves_slots_empty(caplog):
    cands, cls = pool(2)
    es = balanced_sample(cands, cls, P=5, timeframe=(0, 10 * 600), rng_seed=0)
    assert es.P == 5 and len(es.events) == 30
    assert "fill rate" in caplog.text


def test_too_many_periods_for_timeframe():
    cands, cls = pool(2)
    with pytest.raises(ValueError):
        balanced_sample(cands, cls, P=5, timeframe=(0, 1200))


def test_random_mode_ignores_categories():
    cands, cls = pool(10)
    es = balanced_sample(cands, cls, P=5, per_period=4, timeframe=(0, 6000), mode="random")
    assert len(es.events) == 20


def test_event_set_round_trip():
    cands, cls = pool(10)
    es = balanced_sample(cands, cls, P=4, timeframe=(0, 6000), rng_seed=1)
    buf = io.StringIO()
    write_event_set(es, buf)
    buf.seek(0)
    back = read_event_set(buf)
    assert back.periods == es.periods
    assert {k: (e.link, e.prefix, e.first_seen, e.category_pair, e.observer_count)
            for k, e in back.events.items()} == {
        k: (e.link, e.prefix, e.first_seen, e.category_pair, e.observer_count)
        for k, e in es.events.items()}


def test_candidates_round_trip():
    cands, _ = pool(1)
    buf = io.StringIO()
    write_candidates(cands, buf)
    buf.seek(0)
    assert read_candidates(buf) == cands


def test_self_loop_event_rejected():
    with pytest.raises(ValueError):
        CandidateEvent((3, 3), "p", 0)
