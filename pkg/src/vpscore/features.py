"""Topological features of an AS link as seen from one VP's graph.

Nine features, indexed 0-8::

    0 closeness centrality      (weighted)
    1 harmonic centrality       (weighted)
    2 average neighbor degree   (weighted)
    3 eccentricity              (weighted)
    4 triangle count
    5 clustering coefficient    (weighted)
    6 Jaccard coefficient
    7 Adamic-Adar index
    8 preferential attachment

Shortest paths use edge length ``1 / weight``. Node features (0-5) are
computed for both link endpoints and interleaved, then followed by the
three pair features, giving a 15-dimensional vector.
"""

from __future__ import annotations

import heapq
import math
from typing import Mapping

import numpy as np

from .graph import VpGraph, VpReplayer

FEATURE_NAMES = (
    "closeness",
    "harmonic",
    "avg_neighbor_degree",
    "eccentricity",
    "triangles",
    "clustering",
    "jaccard",
    "adamic_adar",
    "preferential_attachment",
)
WEIGHTED_FEATURES = (0, 1, 2, 3, 5)
N_NODE_FEATURES = 6
N_PAIR_FEATURES = 3
VECTOR_SIZE = 2 * N_NODE_FEATURES + N_PAIR_FEATURES

VECTOR_LAYOUT = tuple(
    [f"f{i}({end})" for i in range(N_NODE_FEATURES) for end in ("as1", "as2")]
    + [f"f{i}(pair)" for i in range(N_NODE_FEATURES, N_NODE_FEATURES + N_PAIR_FEATURES)]
)

# feature categories used for ablations
FEATURE_CATEGORIES = {
    "centrality": (0, 1),
    "neighborhood": (2, 3),
    "pattern": (4, 5),
    "pair": (6, 7, 8),
}


def vector_positions(feature_index: int) -> tuple:
    """Positions of ``feature_index`` inside the 15-dimensional vector."""
    if 0 <= feature_index < N_NODE_FEATURES:
        return (2 * feature_index, 2 * feature_index + 1)
    if N_NODE_FEATURES <= feature_index < N_NODE_FEATURES + N_PAIR_FEATURES:
        return (2 * N_NODE_FEATURES + feature_index - N_NODE_FEATURES,)
    raise ValueError(f"no feature with index {feature_index}")


Adjacency = Mapping[int, Mapping[int, float]]


def adjacency(graph: VpGraph) -> dict:
    adj = {n: {} for n in graph.node_refs}
    for (a, b), w in graph.edges.items():
        adj[a][b] = w
        adj[b][a] = w
    return adj


def _adj(graph) -> Adjacency:
    return adjacency(graph) if isinstance(graph, VpGraph) else graph


def _dijkstra(adj: Adjacency, source) -> dict:
    dist = {source: 0.0}
    done = set()
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u].items():
            nd = d + 1.0 / w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _strength(adj: Adjacency, node) -> float:
    return float(sum(adj[node].values()))


def node_features(graph, asn) -> np.ndarray:
    adj = _adj(graph)
    out = np.zeros(N_NODE_FEATURES)
    if asn not in adj or not adj[asn]:
        return out
    n = len(adj)
    dist = _dijkstra(adj, asn)
    others = [d for v, d in dist.items() if v != asn]
    r = len(others) + 1
    total = sum(others)
    if total > 0 and n > 1:
        out[0] = ((r - 1) / (n - 1)) * ((r - 1) / total)
    out[1] = sum(1.0 / d for d in others)
    nbrs = adj[asn]
    s = _strength(adj, asn)
    out[2] = sum(w * _strength(adj, j) for j, w in nbrs.items()) / s
    out[3] = max(others) if others else 0.0

    k = len(nbrs)
    triangles = 0
    intensity = 0.0
    nbr_list = sorted(nbrs)
    for i, j in enumerate(nbr_list):
        adj_j = adj[j]
        for h in nbr_list[i + 1:]:
            w_jh = adj_j.get(h)
            if w_jh is not None:
                triangles += 1
                intensity += (nbrs[j] * nbrs[h] * w_jh) ** (1.0 / 3.0)
    out[4] = triangles
    if k >= 2:
        out[5] = 2.0 * intensity / (k * (k - 1))
    return out


def pair_features(graph, a, b) -> np.ndarray:
    adj = _adj(graph)
    out = np.zeros(N_PAIR_FEATURES)
    if a not in adj or b not in adj:
        return out
    na, nb = set(adj[a]), set(adj[b])
    common = na & nb
    union = na | nb
    if union:
        out[0] = len(common) / len(union)
    out[1] = sum(1.0 / math.log(len(adj[z])) for z in common if len(adj[z]) > 1)
    out[2] = len(na) * len(nb)
    return out


def link_feature_vector(graph, a, b) -> np.ndarray:
    """15-dimensional vector for link ``(a, b)``; endpoints are ordered by ASN."""
    adj = _adj(graph)
    as1, as2 = (a, b) if a <= b else (b, a)
    n1 = node_features(adj, as1)
    n2 = node_features(adj, as2)
    vec = np.empty(VECTOR_SIZE)
    vec[0:2 * N_NODE_FEATURES:2] = n1
    vec[1:2 * N_NODE_FEATURES:2] = n2
    vec[2 * N_NODE_FEATURES:] = pair_features(adj, as1, as2)
    return vec


def event_feature_vector(vp, event, graph_at_event) -> np.ndarray:
    """Feature vector of ``event`` seen from ``vp``'s graph at the event time.

    Computed for every VP, observer or not.
    """
    if isinstance(graph_at_event, VpGraph) and graph_at_event.vp_id != vp:
        raise ValueError(f"graph belongs to {graph_at_event.vp_id!r}, not {vp!r}")
    a, b = event.link
    vec = link_feature_vector(graph_at_event, a, b)
    vec[~np.isfinite(vec)] = 0.0
    return vec


def vp_event_vectors(vp, updates, snapshot, events) -> dict:
    """Vectors of every ``(period, slot) -> event`` for one VP.

    The VP's graph is replayed forward and sampled at each event time
    (updates stamped at the event time included).
    """
    replay = VpReplayer(vp, snapshot)
    stream = [u for u in updates if u.vp_id == vp]
    pos = 0
    out = {}
    for key, ev in sorted(events.items(), key=lambda kv: (kv[1].first_seen, kv[0])):
        while pos < len(stream) and stream[pos].timestamp <= ev.first_seen:
            replay.apply(stream[pos])
            pos += 1
        out[key] = event_feature_vector(vp, ev, replay.graph)
    return out


def feature_tensor(updates_by_vp, snapshots, event_set, vp_ids, jobs=1) -> np.ndarray:
    """``(P, n_vps, per_period * 15)`` tensor; empty slots are NaN."""
    vp_ids = list(vp_ids)
    snapshots = snapshots or {}
    args = [(vp, updates_by_vp.get(vp, ()), snapshots.get(vp), event_set.events) for vp in vp_ids]
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_vp = list(pool.map(vp_event_vectors, *zip(*args)))
    else:
        per_vp = [vp_event_vectors(*a) for a in args]
    X = np.full((event_set.P, len(vp_ids), event_set.per_period * VECTOR_SIZE), np.nan)
    for r, vectors in enumerate(per_vp):
        for (p, slot), vec in vectors.items():
            X[p, r, slot * VECTOR_SIZE:(slot + 1) * VECTOR_SIZE] = vec
    return X


def write_feature_checkpoint(X, vp_ids, fh) -> None:
    """CSV dump keyed by ``(vp_id, period, slot)``; empty slots omitted."""
    fh.write("vp_id,period,slot," + ",".join(VECTOR_LAYOUT) + "\n")
    n_periods, _, n_cols = X.shape
    for p in range(n_periods):
        for slot in range(n_cols // VECTOR_SIZE):
            cols = slice(slot * VECTOR_SIZE, (slot + 1) * VECTOR_SIZE)
            if np.isnan(X[p, 0, cols]).all():
                continue
            for r, vp in enumerate(vp_ids):
                vals = ",".join(repr(float(v)) for v in X[p, r, cols])
                fh.write(f"{vp},{p},{slot},{vals}\n")


def read_feature_checkpoint(fh, n_periods, per_period):
    header = fh.readline().rstrip("\n").split(",")
    if tuple(header[3:]) != VECTOR_LAYOUT:
        raise ValueError("feature checkpoint column layout does not match this version")
    rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    vp_ids = sorted({r[0] for r in rows})
    idx = {v: i for i, v in enumerate(vp_ids)}
    X = np.full((n_periods, len(vp_ids), per_period * VECTOR_SIZE), np.nan)
    for r in rows:
        p, slot = int(r[1]), int(r[2])
        X[p, idx[r[0]], slot * VECTOR_SIZE:(slot + 1) * VECTOR_SIZE] = [float(v) for v in r[3:]]
    return X, vp_ids
