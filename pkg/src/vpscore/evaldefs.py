"""Update-level redundancy definitions, use-case objectives and baselines.

Three nested definitions decide whether an update ``u1`` of one VP is
redundant with an update ``u2`` of another:

    level 1  same prefix, ``|t1 - t2| < 300`` s
    level 2  level 1, and the AS links ``u1`` adds are a subset of those
             ``u2`` adds
    level 3  level 2, and likewise for community values

"Adds" is measured against the VP's route for the prefix just before the
update was applied. Levels 2 and 3 are asymmetric.
"""

from __future__ import annotations

import bisect
import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .graph import collapse_path, path_links
from .ingest import BgpUpdate, RibTable
from .minimet import farthest_point_order

TIME_WINDOW = 300
LEVELS = (1, 2, 3)
USE_CASES = ("transient_paths", "moas", "topology_links", "unnecessary_updates")
BASELINES = ("random", "as_distance", "unbiased")


class MissingStateError(ValueError):
    pass


class UnreachableObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class RouteState:
    """AS links and communities of a VP's route for one prefix."""

    links: frozenset = frozenset()
    communities: frozenset = frozenset()

    @classmethod
    def of(cls, as_path, communities=()) -> "RouteState":
        return cls(path_links(as_path) if as_path else frozenset(), frozenset(communities))


EMPTY_STATE = RouteState()


def _current(update: BgpUpdate) -> RouteState:
    if update.is_withdraw:
        return EMPTY_STATE
    return RouteState.of(update.as_path, update.communities)


@dataclass(frozen=True)
class ObservedUpdate:
    """An update with the VP's route state for its prefix just before it."""

    update: BgpUpdate
    prior: RouteState
    prior_path: tuple | None = None

    @property
    def added_links(self) -> frozenset:
        return _current(self.update).links - self.prior.links

    @property
    def added_communities(self) -> frozenset:
        return _current(self.update).communities - self.prior.communities


def check_level(level) -> int:
    if level not in LEVELS:
        raise ValueError(f"redundancy level must be one of {LEVELS}, got {level!r}")
    return int(level)


def is_redundant(level, u1: BgpUpdate, u2: BgpUpdate, state1: RouteState,
                 state2: RouteState, window=TIME_WINDOW) -> bool:
    """Whether ``u1`` is redundant with ``u2`` at ``level``.

    ``state_i`` is the route state of ``u_i``'s VP for the prefix just
    before ``u_i`` (``EMPTY_STATE`` when there was no route).
    """
    level = check_level(level)
    if state1 is None or state2 is None:
        raise MissingStateError("prior route state is required for both updates")
    if u1.prefix != u2.prefix or not abs(u1.timestamp - u2.timestamp) < window:
        return False
    if level == 1:
        return True
    c1, c2 = _current(u1), _current(u2)
    if not (c1.links - state1.links) <= (c2.links - state2.links):
        return False
    if level == 2:
        return True
    return (c1.communities - state1.communities) <= (c2.communities - state2.communities)


def _observed_redundant(level, o1: ObservedUpdate, o2: ObservedUpdate, window) -> bool:
    return is_redundant(level, o1.update, o2.update, o1.prior, o2.prior, window)


# ---------------------------------------------------------------------------
# archives


@dataclass
class Archive:
    """RIB snapshots and an update stream for a set of VPs."""

    snapshots: dict = field(default_factory=dict)
    updates: list = field(default_factory=list)



def archive_vps(archive) -> list:
    return sorted(set(archive.snapshots) | {u.vp_id for u in archive.updates})


def vp_streams(archive) -> dict:
    out = defaultdict(list)
    for u in archive.updates:
        out[u.vp_id].append(u)
    return dict(out)


def observe(vp_id, updates: Iterable[BgpUpdate], snapshot: RibTable | None = None) -> list:
    """Replay one VP's updates and attach each one's prior route state."""
    rib = snapshot.copy() if snapshot is not None else RibTable(vp_id, 0)
    out = []
    for u in updates:
        if u.vp_id != vp_id:
            continue
        old = rib.apply(u)
        if old is None:
            out.append(ObservedUpdate(u, EMPTY_STATE))
        else:
            out.append(ObservedUpdate(u, RouteState.of(old.as_path, old.communities),
                                      tuple(old.as_path)))
    return out


def observe_archive(archive, vps=None) -> dict:
    streams = vp_streams(archive)
    vps = archive_vps(archive) if vps is None else list(vps)
    return {vp: observe(vp, streams.get(vp, ()), archive.snapshots.get(vp)) for vp in vps}


# ---------------------------------------------------------------------------
# pairwise redundancy


def _by_prefix(stream: Sequence[ObservedUpdate]) -> dict:
    idx = defaultdict(list)
    for i, o in enumerate(stream):
        idx[o.update.prefix].append((o.update.timestamp, i))
    for v in idx.values():
        v.sort()
    return idx


def redundant_flags(level, U1: Sequence[ObservedUpdate], U2: Sequence[ObservedUpdate],
                    same_stream=False, window=TIME_WINDOW) -> np.ndarray:
    """Per update of ``U1``: redundant with at least one update of ``U2``.

    With ``same_stream`` an update is never matched with itself.
    """
    level = check_level(level)
    idx = _by_prefix(U2)
    out = np.zeros(len(U1), dtype=bool)
    for i, o in enumerate(U1):
        cands = idx.get(o.update.prefix)
        if not cands:
            continue
        t = o.update.timestamp
        lo = bisect.bisect_right(cands, (t - window, math.inf))
        hi = bisect.bisect_left(cands, (t + window, -math.inf))
        for _, j in cands[lo:hi]:
            if same_stream and j == i:
                continue
            if _observed_redundant(level, o, U2[j], window):
                out[i] = True
                break
    return out


def vp_pair_redundancy(level, U1: Sequence[ObservedUpdate], U2: Sequence[ObservedUpdate],
                       window=TIME_WINDOW) -> float:
    """Fraction of ``U1`` redundant with at least one update of ``U2``."""
    if len(U1) == 0:
        raise ValueError("the first update stream is empty")
    return float(redundant_flags(level, U1, U2, window=window).mean())


def redundancy_matrix(level, streams: Mapping, vps=None, window=TIME_WINDOW) -> tuple:
    """``(vp_ids, M)`` with ``M[i, j]`` the redundancy of VP i with VP j."""
    vps = sorted(streams) if vps is None else list(vps)
    n = len(vps)
    M = np.ones((n, n))
    for i, a in enumerate(vps):
        for j, b in enumerate(vps):
            if i != j:
                M[i, j] = vp_pair_redundancy(level, streams[a], streams[b], window)
    return vps, M


def greedy_specific_def(level, streams: Mapping, k=None, window=TIME_WINDOW) -> list:
    """Greedy order minimizing the share of redundant updates in the union.

    An update of the collected stream is redundant when it is redundant with
    any other collected update (of the same VP or another). Each step adds
    the VP leaving the lowest share; ties go to the smallest vp_id.
    """
    level = check_level(level)
    vps = sorted(streams)
    k = len(vps) if k is None else k
    if k > len(vps):
        raise ValueError(f"k={k} exceeds the {len(vps)} available VPs")
    flags = {(a, b): redundant_flags(level, streams[a], streams[b], a == b, window)
             for a in vps for b in vps}
    chosen = []
    red = {}  # vp -> current per-update redundant flags against the selection
    while len(chosen) < k:
        best = None
        for c in vps:
            if c in red:
                continue
            total = sum(len(streams[v]) for v in chosen) + len(streams[c])
            n_red = sum(int((red[v] | flags[(v, c)]).sum()) for v in chosen)
            own = flags[(c, c)].copy()
            for v in chosen:
                own |= flags[(c, v)]
            n_red += int(own.sum())
            share = n_red / total if total else 0.0
            if best is None or share < best[0]:
                best = (share, c, own)
        _, c, own = best
        for v in chosen:
            red[v] = red[v] | flags[(v, c)]
        red[c] = own
        chosen.append(c)
    return chosen


# ---------------------------------------------------------------------------
# use cases


def transient_events(stream: Sequence[ObservedUpdate], window=TIME_WINDOW) -> set:
    """``(prefix, path)`` of routes replaced or withdrawn within ``window``."""
    out = set()
    installed = {}
    for o in stream:
        u = o.update
        prev = installed.get(u.prefix)
        if prev is not None and u.timestamp - prev[0] < window:
            if u.is_withdraw or collapse_path(u.as_path) != prev[1]:
                out.add((u.prefix, prev[1]))
        if u.is_withdraw:
            installed.pop(u.prefix, None)
        elif prev is None or collapse_path(u.as_path) != prev[1]:
            installed[u.prefix] = (u.timestamp, collapse_path(u.as_path))
    return out


def unnecessary_events(stream: Sequence[ObservedUpdate]) -> set:
    """Announcements repeating the installed path with a different community set."""
    out = set()
    for o in stream:
        u = o.update
        if u.is_withdraw or o.prior_path != u.as_path:
            continue
        if u.communities != o.prior.communities:
            out.add((u.prefix, u.as_path, o.prior.communities, u.communities))
    return out


def _routes_seen(stream, snapshot):
    if snapshot is not None:
        for pfx, r in snapshot.routes.items():
            yield pfx, r.as_path
    for o in stream:
        if not o.update.is_withdraw:
            yield o.update.prefix, o.update.as_path


def origin_pairs(stream, snapshot=None) -> set:
    """``(prefix, origin AS)`` of every route observed."""
    return {(pfx, collapse_path(p)[-1]) for pfx, p in _routes_seen(stream, snapshot) if p}


def link_set(stream, snapshot=None) -> set:
    out = set()
    for _, p in _routes_seen(stream, snapshot):
        out |= path_links(p)
    return out


def moas_prefixes(pairs: Iterable) -> set:
    origins = defaultdict(set)
    for pfx, origin in pairs:
        origins[pfx].add(origin)
    return {p for p, o in origins.items() if len(o) > 1}


def vp_observations(use_case, stream, snapshot=None, window=TIME_WINDOW) -> set:
    """Keys one VP contributes towards ``use_case``."""
    if use_case == "transient_paths":
        return transient_events(stream, window)
    if use_case == "unnecessary_updates":
        return unnecessary_events(stream)
    if use_case == "moas":
        return origin_pairs(stream, snapshot)
    if use_case == "topology_links":
        return link_set(stream, snapshot)
    raise ValueError(f"unknown use case {use_case!r}; expected one of {USE_CASES}")


def events_from(use_case, keys: set) -> set:
    """Events detected from the union of collected keys."""
    return moas_prefixes(keys) if use_case == "moas" else set(keys)


def detectors(archive, vps=None, window=TIME_WINDOW) -> dict:
    """Per use case, the events visible from all of ``vps`` together."""
    streams = observe_archive(archive, vps)
    out = {}
    for uc in USE_CASES:
        keys = set()
        for vp, s in streams.items():
            keys |= vp_observations(uc, s, archive.snapshots.get(vp), window)
        out[uc] = events_from(uc, keys)
    return out


@dataclass(frozen=True)
class ObjectiveSpec:
    use_case: str
    target_fraction: float
    ground_events: frozenset | None = None

    def __post_init__(self):
        if self.use_case not in USE_CASES:
            raise ValueError(f"unknown use case {self.use_case!r}; expected one of {USE_CASES}")
        if not 0 < self.target_fraction <= 1:
            raise ValueError(f"target_fraction must be in (0, 1], got {self.target_fraction!r}")


class UseCaseData:
    """Precomputed per-VP keys and volumes for evaluating objectives."""

    def __init__(self, archive, vps=None, window=TIME_WINDOW):
        streams = observe_archive(archive, vps)
        self.vp_ids = sorted(streams)
        self.volumes = {vp: len(s) for vp, s in streams.items()}
        self.keys = {
            uc: {vp: vp_observations(uc, s, archive.snapshots.get(vp), window)
                 for vp, s in streams.items()}
            for uc in USE_CASES
        }

    def ground(self, objective: ObjectiveSpec) -> frozenset:
        if objective.ground_events is not None:
            return frozenset(objective.ground_events)
        allkeys = set().union(*self.keys[objective.use_case].values()) if self.vp_ids else set()
        return frozenset(events_from(objective.use_case, allkeys))

    def detected(self, use_case, vps, ground) -> set:
        keys = set()
        for vp in vps:
            keys |= self.keys[use_case][vp]
        return events_from(use_case, keys) & ground


def required_events(objective: ObjectiveSpec, n_ground: int) -> int:
    return math.ceil(round(objective.target_fraction * n_ground, 9))


def updates_to_meet(objective: ObjectiveSpec, order: Sequence, data: UseCaseData, side="selector"):
    """Updates collected by the shortest prefix of ``order`` meeting ``objective``."""
    ground = data.ground(objective)
    if not ground:
        raise UnreachableObjectiveError(f"{objective.use_case}: no ground-truth events")
    need = required_events(objective, len(ground))
    keys = set()
    volume = 0
    for vp in order:
        keys |= data.keys[objective.use_case][vp]
        volume += data.volumes[vp]
        if len(events_from(objective.use_case, keys) & ground) >= need:
            return volume
    reached = len(events_from(objective.use_case, keys) & ground) / len(ground)
    raise UnreachableObjectiveError(
        f"{side} reaches only {reached:.1%} of {objective.use_case} events, "
        f"target {objective.target_fraction:.0%}")


def reduction_factor(objective: ObjectiveSpec, baseline_order: Sequence, reference_order: Sequence,
                     data: UseCaseData) -> float:
    """Updates needed by the baseline divided by updates needed by the reference."""
    base = updates_to_meet(objective, baseline_order, data, "baseline")
    ref = updates_to_meet(objective, reference_order, data, "reference")
    if ref == 0:
        return 1.0 if base == 0 else math.inf
    return base / ref


def greedy_specific_usecase(objective: ObjectiveSpec, vps, data: UseCaseData) -> list:
    """Order VPs by marginal events gained per update collected.

    Ties go to the smaller volume, then the smaller vp_id. A VP with no
    updates and a positive gain ranks first.
    """
    left = sorted(vps)
    ground = data.ground(objective)
    uc = objective.use_case
    chosen, keys = [], set()
    have = 0
    while left:
        best = None
        for vp in left:
            gain = len(events_from(uc, keys | data.keys[uc][vp]) & ground) - have
            vol = data.volumes[vp]
            ratio = (math.inf if vol == 0 else gain / vol) if gain > 0 else 0.0
            cand = (-ratio, vol, vp)
            if best is None or cand < best:
                best = cand
        vp = best[2]
        chosen.append(vp)
        left.remove(vp)
        keys |= data.keys[uc][vp]
        have = len(events_from(uc, keys) & ground)
    return chosen


# ---------------------------------------------------------------------------
# naive baselines


def vp_home_as(archive, vp) -> int | None:
    """The VP's own AS: first hop of any path it holds."""
    snap = archive.snapshots.get(vp)
    if snap is not None:
        for r in snap.routes.values():
            if r.as_path:
                return collapse_path(r.as_path)[0]
    for u in archive.updates:
        if u.vp_id == vp and u.as_path:
            return collapse_path(u.as_path)[0]
    return None


def vp_hop_distances(archive, vps) -> np.ndarray:
    """AS-hop distances between VPs over the union graph of all observed links."""
    vps = list(vps)
    g = nx.Graph()
    for vp, stream in observe_archive(archive).items():
        g.add_edges_from(link_set(stream, archive.snapshots.get(vp)))
    home = [vp_home_as(archive, vp) for vp in vps]
    n = len(vps)
    D = np.full((n, n), np.inf)
    for i, a in enumerate(home):
        if a is None or a not in g:
            D[i, i] = 0.0
            continue
        lengths = nx.single_source_shortest_path_length(g, a)
        for j, b in enumerate(home):
            if b in lengths:
                D[i, j] = lengths[b]
    return D


def _bias(counts: Mapping, categories: Sequence) -> float:
    """Total-variation distance between the category mix and a uniform mix."""
    total = sum(counts.values())
    if total == 0:
        return 0.0
    u = 1.0 / len(categories)
    return 0.5 * sum(abs(counts.get(c, 0) / total - u) for c in categories)


def unbiased_order(vps, categories: Mapping) -> list:
    """Remove VPs one by one keeping the category mix as even as possible.

    The last VP of a category is never removed while another category still
    has two or more. Returns the reverse removal order (last survivor first).
    Ties remove the largest vp_id.
    """
    left = sorted(vps)
    if not left:
        return []
    cats = sorted({categories[v] for v in left})
    removed = []
    while len(left) > 1:
        counts = defaultdict(int)
        for v in left:
            counts[categories[v]] += 1
        crowded = any(c >= 2 for c in counts.values())
        best = None
        for v in reversed(left):
            c = categories[v]
            if counts[c] == 1 and crowded:
                continue
            counts[c] -= 1
            b = _bias(counts, cats)
            counts[c] += 1
            if best is None or b < best[0]:
                best = (b, v)
        removed.append(best[1])
        left.remove(best[1])
    return left + removed[::-1]


def naive_baselines(strategy, vps, k=None, seed=0, distances=None, categories=None) -> list:
    """``random``, ``as_distance`` (needs ``distances``, ordered like sorted
    ``vps``) or ``unbiased`` (needs ``categories``)."""
    vps = sorted(vps)
    k = len(vps) if k is None else k
    if k > len(vps):
        raise ValueError(f"k={k} exceeds the {len(vps)} available VPs")
    rng = np.random.default_rng(seed)
    if strategy == "random":
        return [vps[i] for i in rng.permutation(len(vps))[:k]]
    if strategy == "as_distance":
        if distances is None:
            raise ValueError("as_distance needs a VP distance matrix")
        D = np.asarray(distances, dtype=float)
        D = np.where(np.isinf(D), D[np.isfinite(D)].max(initial=0) + 1, D)
        if k == 0:
            return []
        return [vps[i] for i in farthest_point_order(D, int(rng.integers(len(vps))), k)]
    if strategy == "unbiased":
        if categories is None:
            raise ValueError("unbiased needs a VP category map")
        return unbiased_order(vps, categories)[:k]
    raise ValueError(f"unknown baseline {strategy!r}; expected one of {BASELINES}")


# ---------------------------------------------------------------------------
# benchmark report


BENCHMARK_HEADER = ("use_case", "target", "strategy", "updates_processed", "reduction_factor")


def benchmark(data: UseCaseData, reference_order, baselines: Mapping, use_cases=USE_CASES,
              targets=(0.5, 0.7, 0.9)) -> list:
    """Rows of the benchmark report; unreachable cells are reported empty."""
    rows = []
    for uc in use_cases:
        for target in targets:
            obj = ObjectiveSpec(uc, target)
            try:
                ref = updates_to_meet(obj, reference_order, data, "reference")
            except UnreachableObjectiveError:
                ref = None
            for name, order in [("reference", reference_order), *baselines.items()]:
                try:
                    n = updates_to_meet(obj, order, data, name)
                except UnreachableObjectiveError:
                    rows.append((uc, target, name, None, None))
                    continue
                if ref is None:
                    rf = None
                elif ref == 0:
                    rf = 1.0 if n == 0 else math.inf
                else:
                    rf = n / ref
                rows.append((uc, target, name, n, rf))
    return rows


def write_benchmark_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCHMARK_HEADER)
    for uc, target, name, n, rf in rows:
        w.writerow([uc, target, name, "" if n is None else n, "" if rf is None else repr(rf)])
