import io
from collections import Counter

import pytest
from hypothesis import given

from vpscore.graph import (
    GraphConsistencyError, VpGraph, VpReplayer, apply_route_change, build_graph, collapse_path,
    write_edge_list)
from vpscore.ingest import RibTable, Route, rib_at

from .strategies import streams


def rib(routes, vp="v"):
    return RibTable(vp, 0, {f"p{i}": Route(tuple(p), frozenset(), 0) for i, p in enumerate(routes)})


def naive_weights(paths):
    """Count, per unordered AS pair, the path segments joining them after dropping prepends."""
    w = Counter()
    for path in paths:
        dedup = [a for i, a in enumerate(path) if i == 0 or path[i - 1] != a]
        for a, b in zip(dedup, dedup[1:]):
            w[frozenset((a, b))] += 1
    return {tuple(sorted(k)): c for k, c in w.items()}


def test_collapse_prepends():
    assert collapse_path((3, 3, 3, 2, 1, 1)) == (3, 2, 1)


def test_build_examples():
    assert build_graph(rib([(3, 2, 1)])).edges == {(1, 2): 1, (2, 3): 1}
    assert build_graph(rib([(3, 2, 1), (4, 2, 1)])).edges == {(1, 2): 2, (2, 3): 1, (2, 4): 1}
    assert build_graph(rib([(5, 5, 5, 1)])).edges == {(1, 5): 1}


def test_single_as_path_keeps_a_node():
    g = build_graph(rib([(7,)]))
    assert g.edges == {} and g.nodes == {7}


def test_route_change_examples():
    g = build_graph(rib([(2, 1)]))
    apply_route_change(g, (2, 1), None)
    assert g.edges == {} and g.nodes == set()
    g = VpGraph("v")
    apply_route_change(g, None, (3, 1))
    assert g.edges == {(1, 3): 1}
    g = build_graph(rib([(2, 1), (2, 1)]))
    apply_route_change(g, (2, 1), (3, 1))
    assert g == build_graph(rib([(2, 1), (3, 1)]))
    assert g.edges == {(1, 2): 1, (1, 3): 1}


def test_removing_unknown_path_raises():
    with pytest.raises(GraphConsistencyError):
        apply_route_change(VpGraph("v"), (1, 2), None)


def test_edge_list_export():
    buf = io.StringIO()
    write_edge_list(build_graph(rib([(3, 2, 1), (4, 2, 1)])), buf)
    assert buf.getvalue() == "1 2 2\n2 3 1\n2 4 1\n"


@given(streams(max_size=200))
def test_incremental_equals_rebuild(stream):
    replay = VpReplayer("vp1")
    for i, u in enumerate(stream):
        replay.apply(u)
        rebuilt = build_graph(rib_at("vp1", u.timestamp, None, stream[:i + 1]))
        assert replay.graph == rebuilt


@given(streams(max_size=200))
def test_weights_match_naive_count(stream):
    replay = VpReplayer("vp1")
    for u in stream:
        replay.apply(u)
    paths = [r.as_path for r in replay.rib.routes.values()]
    assert replay.graph.edges == naive_weights(paths)
    assert replay.graph.total_weight() == sum(len(collapse_path(p)) - 1 for p in paths)


@given(streams(max_size=60))
def test_new_links_were_absent_before(stream):
    replay = VpReplayer("vp1")
    for u in stream:
        before = set(replay.graph.edges)
        _, new_path, new_links = replay.apply(u)
        assert not set(new_links) & before
        if new_path:
            assert set(new_links) == set(replay.graph.edges) - before
