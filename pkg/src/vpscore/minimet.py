"""Mini-Internet: power-law AS topology, Gao-Rexford routing, VP deployment.

Topologies have power-law degrees and are wired either on a latent circle
(the default) or by a configuration model, then repaired into one connected
component. The three highest-degree
ASes form a fully meshed Tier1 clique; every other AS's tier is one plus its
BFS depth from that clique. Adjacent ASes on the same tier peer (p2p),
otherwise the deeper AS is the customer (c2p).
"""

from __future__ import annotations

import csv
import heapq
import ipaddress
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .graph import edge_key
from .ingest import ANNOUNCE, WITHDRAW, BgpUpdate, RibTable, Route

logger = logging.getLogger(__name__)

P2P = "p2p"
C2P = "c2p"

ORIGIN, CUSTOMER, PEER, PROVIDER = 0, 1, 2, 3
STRATEGIES = ("random", "distance_based", "greedy_specific")


class TopologyError(RuntimeError):
    pass


@dataclass
class AsTopology:
    n: int
    edges: list
    relationships: dict  # edge_key -> P2P, or C2P when the tuple is (customer, provider)
    tiers: dict
    seed: int | None = None
    customers: dict = field(default_factory=dict)
    providers: dict = field(default_factory=dict)
    peers: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.customers:
            self._index()

    def _index(self):
        self.customers = {a: set() for a in range(self.n)}
        self.providers = {a: set() for a in range(self.n)}
        self.peers = {a: set() for a in range(self.n)}
        for (a, b), (kind, cust) in self.relationships.items():
            if kind == P2P:
                self.peers[a].add(b)
                self.peers[b].add(a)
            else:
                prov = b if cust == a else a
                self.customers[prov].add(cust)
                self.providers[cust].add(prov)

    @property
    def tier1(self) -> list:
        return sorted(a for a, t in self.tiers.items() if t == 1)

    def relationship(self, a, b) -> str:
        """'p2p', 'c2p' (a is b's customer) or 'p2c'."""
        kind, cust = self.relationships[edge_key(a, b)]
        if kind == P2P:
            return P2P
        return "c2p" if cust == a else "p2c"

    def edge_class(self, e) -> str:
        return self.relationships[edge_key(*e)][0]

    def degree(self, a) -> int:
        return len(self.customers[a]) + len(self.providers[a]) + len(self.peers[a])

    def neighbors(self, a):
        return self.customers[a] | self.providers[a] | self.peers[a]

    def relationships_map(self) -> dict:
        """AS -> set of customers, as used for AS classification."""
        return {a: set(c) for a, c in self.customers.items()}

    def write_edges(self, fh) -> None:
        """``a b rel`` lines; for c2p, ``a`` is the customer."""
        for (a, b) in sorted(self.relationships):
            kind, cust = self.relationships[(a, b)]
            if kind == P2P:
                fh.write(f"{a} {b} p2p\n")
            else:
                prov = b if cust == a else a
                fh.write(f"{cust} {prov} c2p\n")


def read_relationships(fh) -> dict:
    """AS -> customer set from ``a b rel`` lines."""
    out = {}
    for line in fh:
        parts = line.split()
        if len(parts) != 3 or line.startswith("#"):
            continue
        a, b, rel = int(parts[0]), int(parts[1]), parts[2]
        out.setdefault(a, set())
        out.setdefault(b, set())
        if rel == C2P:
            out[b].add(a)
    return out


def _degree_sequence(rng, n, mean, exponent):
    u = rng.random(n)
    x = (1.0 - u) ** (-1.0 / (exponent - 1.0))

    def seq(s):
        return np.clip(np.rint(s * x), 1, n - 1).astype(int)

    lo, hi = 1e-3, 1e3
    for _ in range(100):
        mid = np.sqrt(lo * hi)
        if seq(mid).mean() < mean:
            lo = mid
        else:
            hi = mid
    deg = seq(hi)
    if deg.sum() % 2:
        deg[int(np.argmin(deg))] += 1
    return deg


def _configuration_graph(rng, n, target, exponent):
    deg = _degree_sequence(rng, n, target, exponent)
    multi = nx.configuration_model(deg.tolist(), seed=int(rng.integers(2**31)))
    g = nx.Graph(multi)
    g.remove_edges_from(list(nx.selfloop_edges(g)))
    comps = sorted(nx.connected_components(g), key=lambda c: (-len(c), min(c)))
    main_nodes = sorted(comps[0])
    weights = np.array([max(g.degree(v), 1) for v in main_nodes], dtype=float)
    weights /= weights.sum()
    for comp in comps[1:]:
        # attach each stray component through its best-connected AS
        v = max(sorted(comp), key=g.degree)
        u = main_nodes[int(rng.choice(len(main_nodes), p=weights))]
        g.add_edge(v, u)
    return g


def _geometric_graph(rng, n, target, exponent, temperature):
    """S1 latent-geometry graph with power-law expected degrees.

    Nodes sit on a circle of circumference ``n``; ``i`` and ``j`` link with
    probability ``1 / (1 + (d_ij / (mu * k_i * k_j)) ** (1 / temperature))``,
    ``mu`` set so the expected mean degree equals ``target``. At temperature 0
    this is the step ``d_ij < mu * k_i * k_j`` (maximal clustering).
    """
    theta = rng.random(n) * 2 * np.pi
    kappa = np.minimum((1.0 - rng.random(n)) ** (-1.0 / (exponent - 1.0)), n - 1)
    iu = np.triu_indices(n, 1)
    gap = np.abs(theta[iu[0]] - theta[iu[1]])
    d = np.minimum(gap, 2 * np.pi - gap) * n / (2 * np.pi)
    kk = kappa[iu[0]] * kappa[iu[1]]

    def prob(mu):
        if temperature == 0:
            return (d < mu * kk).astype(float)
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + (d / (mu * kk)) ** (1.0 / temperature))

    lo, hi = 1e-6, 1e3
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        if 2 * prob(mid).sum() / n < target:
            lo = mid
        else:
            hi = mid
    p = prob(hi)
    keep = rng.random(p.size) < p
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))
    P = np.zeros((n, n))
    P[iu] = p
    P += P.T
    comps = sorted(nx.connected_components(g), key=lambda c: (-len(c), min(c)))
    main_nodes = np.array(sorted(comps[0]))
    for comp in comps[1:]:
        # link a stray component to its most likely partner in the main one
        v = max(sorted(comp), key=g.degree)
        g.add_edge(v, int(main_nodes[np.argmax(P[v, main_nodes])]))
    return g


def _assemble(rng, n, target, exponent, model, temperature):
    if model == "geometric":
        g = _geometric_graph(rng, n, target, exponent, temperature)
    else:
        g = _configuration_graph(rng, n, target, exponent)
    top = sorted(g.nodes, key=lambda v: (-g.degree(v), v))[:3]
    for i in range(3):
        for j in range(i + 1, 3):
            g.add_edge(top[i], top[j])
    return g, top


MODELS = ("geometric", "configuration")


def generate_topology(n=600, avg_degree=6.1, exponent=2.1, seed=0, max_retries=30,
                      tolerance=0.02, model="geometric", temperature=0.0) -> AsTopology:
    """Connected power-law topology with tiered business relationships.

    ``model`` is ``"geometric"`` (latent-circle wiring, clustered like the
    measured AS graph; ``temperature`` tunes the clustering) or
    ``"configuration"`` (uniform stub matching).
    Retries until the realized mean degree is within ``tolerance`` of
    ``avg_degree``; the best attempt is kept if it is within 10%.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    if exponent <= 2:
        raise ValueError("exponent must exceed 2")
    if not 1 < avg_degree < n - 1:
        raise ValueError(f"average degree {avg_degree} is not achievable with n={n}")
    if model not in MODELS:
        raise ValueError(f"unknown topology model {model!r}; expected one of {MODELS}")
    if not 0 <= temperature < 1:
        raise ValueError("temperature must be in [0, 1)")
    rng = np.random.default_rng(seed)
    target = avg_degree
    best = None
    for _ in range(max_retries):
        g, top = _assemble(rng, n, target, exponent, model, temperature)
        realized = 2 * g.number_of_edges() / n
        err = abs(realized - avg_degree) / avg_degree
        if best is None or err < best[0]:
            best = (err, g, top)
        if err <= tolerance:
            break
        target *= avg_degree / realized
    err, g, top = best
    if err > 0.1:
        raise TopologyError(f"mean degree off by {err:.1%} after {max_retries} attempts")

    depth = nx.multi_source_dijkstra_path_length(g, top, weight=None)
    tiers = {v: depth[v] + 1 for v in g.nodes}
    rels = {}
    for a, b in g.edges:
        e = edge_key(a, b)
        if tiers[a] == tiers[b]:
            rels[e] = (P2P, None)
        else:
            rels[e] = (C2P, a if tiers[a] > tiers[b] else b)
    return AsTopology(n, sorted(rels), rels, tiers, seed)


def _routes_to(topo: AsTopology, origins, disabled=frozenset()):
    """Gao-Rexford best routes towards a prefix originated by ``origins``.

    Returns ``(next_hop, length)`` lists; ``next_hop[o] == o`` for an origin
    and ``-1`` when unreachable. Preference: customer > peer > provider
    route, then shorter path, then lower next-hop AS number.
    """
    n = topo.n
    nh = [-1] * n
    length = [0] * n
    cls = [None] * n

    def up(a, b):
        return edge_key(a, b) not in disabled

    for o in origins:
        nh[o], length[o], cls[o] = o, 0, ORIGIN
    frontier = sorted(origins)
    while frontier:
        nxt = []
        for u in frontier:
            for p in sorted(topo.providers[u]):
                if cls[p] is None and up(u, p):
                    nh[p], length[p], cls[p] = u, length[u] + 1, CUSTOMER
                    nxt.append(p)
        frontier = sorted(nxt)

    exporters = [u for u in range(n) if cls[u] in (ORIGIN, CUSTOMER)]
    best = {}
    for u in exporters:
        for q in topo.peers[u]:
            if cls[q] is None and up(u, q):
                cand = (length[u] + 1, u)
                if q not in best or cand < best[q]:
                    best[q] = cand
    for q, (ln, u) in best.items():
        nh[q], length[q], cls[q] = u, ln, PEER

    heap = []
    for u in range(n):
        if cls[u] is not None:
            for c in topo.customers[u]:
                if cls[c] is None and up(u, c):
                    heapq.heappush(heap, (length[u] + 1, u, c))
    while heap:
        ln, u, c = heapq.heappop(heap)
        if cls[c] is not None:
            continue
        nh[c], length[c], cls[c] = u, ln, PROVIDER
        for cc in topo.customers[c]:
            if cls[cc] is None and up(c, cc):
                heapq.heappush(heap, (ln + 1, c, cc))
    return nh, length


def _path(nh, x):
    if nh[x] == -1:
        return None
    out = [x]
    while nh[out[-1]] != out[-1]:
        out.append(nh[out[-1]])
        if len(out) > len(nh):
            raise TopologyError("forwarding loop")
    return tuple(out)


def next_hop_table(topo: AsTopology, disabled=frozenset()) -> list:
    """``table[d][x]``: next hop of AS ``x`` towards AS ``d``'s prefix."""
    return [_routes_to(topo, (d,), disabled)[0] for d in range(topo.n)]


def prefix_of(asn: int) -> str:
    return f"{ipaddress.IPv4Address(0x0A000000 + (asn << 8))}/24"


def propagate_routes(topo: AsTopology, table=None) -> dict:
    """Per-AS RIB (AS path from the AS itself to the origin) at the fixed point."""
    table = table if table is not None else next_hop_table(topo)
    ribs = {x: RibTable(f"as{x}", 0) for x in range(topo.n)}
    for d, nh in enumerate(table):
        pfx = prefix_of(d)
        for x in range(topo.n):
            p = _path(nh, x)
            if p is not None:
                ribs[x].routes[pfx] = Route(p, frozenset(), 0)
    return ribs


def is_valley_free(topo: AsTopology, path) -> bool:
    """Reading from origin to observer: c2p*, at most one p2p, then p2c*."""
    hops = list(reversed(path))
    phase = 0  # 0 uphill, 1 after the peer hop or first downhill
    for a, b in zip(hops, hops[1:]):
        rel = topo.relationship(a, b)
        if rel == "c2p":
            if phase:
                return False
        elif rel == P2P:
            if phase:
                return False
            phase = 1
        else:
            phase = 1
    return True


def is_stable(topo: AsTopology, ribs: dict) -> bool:
    """No AS prefers a route its neighbours export over the one it holds."""
    rank = {CUSTOMER: 0, PEER: 1, PROVIDER: 2}
    for d in range(topo.n):
        pfx = prefix_of(d)
        for x in range(topo.n):
            if x == d:
                continue
            cur = ribs[x].path(pfx)
            best = None
            for y in topo.neighbors(x):
                py = ribs[y].path(pfx)
                if py is None or x in py:
                    continue
                rel_y = topo.relationship(y, x)  # role of y relative to x
                learned_from = {"c2p": CUSTOMER, P2P: PEER, "p2c": PROVIDER}[rel_y]
                # y exports everything to its customers, only customer
                # routes to its peers and providers
                y_cls = _route_class(topo, y, py)
                if learned_from != PROVIDER and y_cls not in (ORIGIN, CUSTOMER):
                    continue
                cand = (rank[learned_from], len(py) + 1, y)
                if best is None or cand < best:
                    best = cand
            if best is None:
                if cur is not None:
                    return False
                continue
            if cur is None:
                return False
            held = (rank[_route_class(topo, x, cur)], len(cur), cur[1])
            if held != best:
                return False
    return True


def _route_class(topo, x, path):
    if len(path) == 1:
        return ORIGIN
    rel = topo.relationship(path[1], x)
    return {"c2p": CUSTOMER, P2P: PEER, "p2c": PROVIDER}[rel]


def link_matrix(topo: AsTopology, table=None, vantage=None):
    """Boolean matrix ``seen[i, j]``: AS ``vantage[i]`` has link ``j`` in its RIB.

    Returns ``(seen, links)`` with ``links`` the sorted edge list.
    """
    table = table if table is not None else next_hop_table(topo)
    links = list(topo.edges)
    idx = {e: j for j, e in enumerate(links)}
    vantage = range(topo.n) if vantage is None else vantage
    vantage = list(vantage)
    seen = np.zeros((len(vantage), len(links)), dtype=bool)
    for i, x in enumerate(vantage):
        row = seen[i]
        for nh in table:
            u = x
            while nh[u] != u and nh[u] != -1:
                row[idx[edge_key(u, nh[u])]] = True
                u = nh[u]
    return seen, links


def link_matrix_from_ribs(topo: AsTopology, ribs: dict):
    links = list(topo.edges)
    idx = {e: j for j, e in enumerate(links)}
    seen = np.zeros((topo.n, len(links)), dtype=bool)
    for x, rib in ribs.items():
        for r in rib.routes.values():
            p = r.as_path
            for a, b in zip(p, p[1:]):
                seen[x, idx[edge_key(a, b)]] = True
    return seen, links


def hop_distances(topo: AsTopology) -> np.ndarray:
    rows, cols = zip(*topo.edges) if topo.edges else ((), ())
    m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(topo.n, topo.n))
    return shortest_path(m, directed=False, unweighted=True)


def farthest_point_order(dist: np.ndarray, first: int, k=None, candidates=None) -> list:
    """Farthest-point traversal: each pick maximizes its hop distance to the
    closest already picked node (ties to the lowest index)."""
    cand = np.arange(dist.shape[0]) if candidates is None else np.asarray(candidates)
    k = len(cand) if k is None else k
    order = [first]
    closest = dist[first, cand].astype(float).copy()
    chosen = np.zeros(len(cand), dtype=bool)
    chosen[np.flatnonzero(cand == first)] = True
    while len(order) < k:
        score = np.where(chosen, -np.inf, closest)
        j = int(np.argmax(score))
        order.append(int(cand[j]))
        chosen[j] = True
        closest = np.minimum(closest, dist[cand[j], cand])
    return order


def greedy_cover_order(seen: np.ndarray, k=None) -> list:
    """Rows in greedy max-marginal-coverage order (ties to the lowest index)."""
    n = seen.shape[0]
    k = n if k is None else k
    covered = np.zeros(seen.shape[1], dtype=bool)
    left = np.ones(n, dtype=bool)
    order = []
    for _ in range(k):
        gain = (seen & ~covered).sum(axis=1)
        gain[~left] = -1
        i = int(np.argmax(gain))
        order.append(i)
        left[i] = False
        covered |= seen[i]
    return order


def deployment_order(topo: AsTopology, seen: np.ndarray, strategy: str, seed=0, k=None,
                     dist=None) -> list:
    k = topo.n if k is None else k
    rng = np.random.default_rng(seed)
    if strategy == "random":
        return rng.permutation(topo.n)[:k].tolist()
    if strategy in ("distance_based", "distance"):
        dist = hop_distances(topo) if dist is None else dist
        return farthest_point_order(dist, int(rng.integers(topo.n)), k)
    if strategy in ("greedy_specific", "greedy"):
        return greedy_cover_order(seen, k)
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass
class Coverage:
    k: int
    p2p: float
    c2p: float
    vps: list


def coverage_of(topo, seen, links, vps) -> Coverage:
    is_p2p = np.array([topo.edge_class(e) == P2P for e in links])
    if len(vps):
        observed = seen[list(vps)].any(axis=0)
    else:
        observed = np.zeros(len(links), dtype=bool)
    p2p = observed[is_p2p].mean() if is_p2p.any() else 1.0
    c2p = observed[~is_p2p].mean() if (~is_p2p).any() else 1.0
    return Coverage(len(vps), float(p2p), float(c2p), list(vps))


def deploy_and_measure(topology, ribs, strategy, k, seed=0, seen=None) -> Coverage:
    """Deploy ``k`` VPs with ``strategy`` and report p2p / c2p link coverage."""
    if not 0 <= k <= topology.n:
        raise ValueError(f"k must be within [0, {topology.n}]")
    if seen is None:
        seen, links = link_matrix_from_ribs(topology, ribs)
    else:
        links = list(topology.edges)
    vps = deployment_order(topology, seen, strategy, seed, k) if k else []
    return coverage_of(topology, seen, links, vps)


def coverage_curve(topo, seen, strategy, seed, ks, dist=None) -> list:
    """Coverage at every ``k`` in ``ks`` for one nested deployment order."""
    links = list(topo.edges)
    is_p2p = np.array([topo.edge_class(e) == P2P for e in links])
    order = deployment_order(topo, seen, strategy, seed, max(ks) if ks else 0, dist=dist)
    observed = np.zeros(len(links), dtype=bool)
    out, done = [], 0
    for k in sorted(ks):
        for x in order[done:k]:
            observed |= seen[x]
        done = k
        out.append(Coverage(k, float(observed[is_p2p].mean()), float(observed[~is_p2p].mean()),
                            order[:k]))
    return out


def write_coverage_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["strategy", "k", "seed", "p2p_coverage", "c2p_coverage"])
    for strategy, seed, cov in rows:
        w.writerow([strategy, cov.k, seed, repr(cov.p2p), repr(cov.c2p)])


# ---------------------------------------------------------------------------
# synthetic update archives

@dataclass
class SimulatedArchive:
    topology: AsTopology
    vp_asns: dict  # vp_id -> AS
    snapshots: dict  # vp_id -> RibTable
    updates: list
    start: int
    end: int


def _communities(origin, tag):
    return frozenset({f"{origin}:{tag}"})


def simulate_archive(topo: AsTopology, vp_asns: dict, start=0, duration=86400, n_events=300,
                     seed=0, transient_prob=0.3, community_prob=0.15, moas_prob=0.1,
                     max_jitter=90) -> SimulatedArchive:
    """Replay random link failures/restorations, community retags and short
    multi-origin announcements, emitting each VP's route changes.

    VPs sharing an AS see identical streams. Each VP reacts to a routing
    change after a per-event jitter of up to ``max_jitter`` seconds.
    """
    rng = np.random.default_rng(seed)
    n = topo.n
    prefixes = [prefix_of(d) for d in range(n)]
    tags = [0] * n
    disabled = set()
    extra_origin = {}

    def compute(d):
        origins = (d,) + ((extra_origin[d],) if d in extra_origin else ())
        return _routes_to(topo, origins, frozenset(disabled))[0]

    state = [compute(d) for d in range(n)]
    hosts = sorted(set(vp_asns.values()))

    def paths_of(d):
        return {x: _path(state[d], x) for x in hosts}

    current = {d: paths_of(d) for d in range(n)}
    snapshots = {}
    for vp, x in sorted(vp_asns.items()):
        rib = RibTable(vp, start)
        for d in range(n):
            p = current[d][x]
            if p is not None:
                rib.routes[prefixes[d]] = Route(p, _communities(p[-1], tags[d]), start)
        snapshots[vp] = rib

    times = np.sort(rng.integers(start + 1, start + duration - max_jitter - 1, size=n_events))
    pending = []  # (time, kind, payload) follow-ups
    raw = []
    edges = list(topo.edges)

    def emit(t, dirty):
        jitter = {x: int(rng.integers(max_jitter)) for x in hosts}
        for d in dirty:
            new = paths_of(d)
            for x in hosts:
                old_p, new_p = current[d][x], new[x]
                if old_p == new_p and d not in comm_changed:
                    continue
                if new_p is None:
                    if old_p is not None:
                        raw.append((t + jitter[x], x, WITHDRAW, d, (), frozenset()))
                    continue
                raw.append((t + jitter[x], x, ANNOUNCE, d, new_p,
                            _communities(new_p[-1], tags[d])))
            current[d] = new

    # (time, sequence, kind); the sequence keeps equal-time pops ordered
    events = [(int(t), i, "random") for i, t in enumerate(times)]
    heapq.heapify(events)
    seq = len(events)
    while events:
        t, _, kind = heapq.heappop(events)
        comm_changed = set()
        if kind == "random":
            r = rng.random()
            if r < moas_prob:
                d = int(rng.integers(n))
                o = int(rng.integers(n))
                if o == d or d in extra_origin:
                    continue
                extra_origin[d] = o
                kind_done = ("unmoas", d)
                delay = int(rng.integers(60, 900))
            elif r < moas_prob + community_prob:
                d = int(rng.integers(n))
                tags[d] += 1
                comm_changed = {d}
                emit(t, [d])
                continue
            else:
                e = edges[int(rng.integers(len(edges)))]
                if e in disabled:
                    continue
                disabled.add(e)
                kind_done = ("restore", e)
                short = rng.random() < transient_prob
                delay = int(rng.integers(30, 240)) if short else int(rng.integers(600, 7200))
            if t + delay < start + duration - max_jitter - 1:
                heapq.heappush(events, (t + delay, seq, kind_done))
                seq += 1
            else:
                pending.append(kind_done)
        elif kind[0] == "restore":
            disabled.discard(kind[1])
        elif kind[0] == "unmoas":
            extra_origin.pop(kind[1], None)
        new_state = [compute(d) for d in range(n)]
        dirty = [d for d in range(n) if new_state[d] != state[d]]
        state = new_state
        emit(t, dirty)

    raw.sort(key=lambda r: (r[0], r[1], r[3]))
    updates = []
    by_host = {}
    for vp, x in vp_asns.items():
        by_host.setdefault(x, []).append(vp)
    for t, x, kind, d, path, comms in raw:
        for vp in sorted(by_host[x]):
            updates.append(BgpUpdate(int(t), vp, kind, prefixes[d], tuple(path), comms))
    updates.sort(key=lambda u: u.timestamp)
    return SimulatedArchive(topo, dict(vp_asns), snapshots, updates, start, start + duration)


def default_hypergiants(topo: AsTopology, count=3) -> list:
    """Highest-degree non-Tier1 ASes, standing in for an external hypergiant list."""
    t1 = set(topo.tier1)
    ranked = sorted((a for a in range(topo.n) if a not in t1), key=lambda a: (-topo.degree(a), a))
    return ranked[:count]
