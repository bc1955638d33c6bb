"""New-AS-link event detection, AS categories and period-stratified sampling."""

from __future__ import annotations

import enum
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import VpReplayer, edge_key
from .ingest import BgpUpdate, RibTable, check_sorted

logger = logging.getLogger(__name__)

WINDOW = 600
DEFAULT_PERIODS = 500
DEFAULT_PER_PERIOD = 15
DEFAULT_MAX_ATTEMPTS = 10


class AsCategory(enum.IntEnum):
    STUB = 1
    TRANSIT1 = 2
    TRANSIT2 = 3
    HYPERGIANT = 4
    TIER1 = 5


CATEGORY_PAIRS = tuple(itertools.combinations_with_replacement(sorted(AsCategory), 2))


def category_pair(c1, c2) -> tuple:
    c1, c2 = AsCategory(c1), AsCategory(c2)
    return (c1, c2) if c1 <= c2 else (c2, c1)


def format_pair(pair) -> str:
    return f"{int(pair[0])}-{int(pair[1])}"


def parse_pair(text: str) -> tuple:
    a, b = text.split("-")
    return category_pair(int(a), int(b))


def customer_cones(relationships: Mapping[int, Iterable[int]]) -> dict:
    """Customer cone size of every AS (the AS itself included)."""
    sizes = {}
    for root in relationships:
        seen = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for c in relationships.get(u, ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        sizes[root] = len(seen)
    return sizes


def transit_average_cone(relationships, cones) -> float:
    transit = [cones[a] for a, cust in relationships.items() if cust and a in cones]
    return float(np.mean(transit)) if transit else 0.0


def classify_as(asn, relationships, customer_cones, tier1_list=(), hypergiant_list=(),
                average_cone=None) -> AsCategory:
    if asn in tier1_list:
        return AsCategory.TIER1
    if asn in hypergiant_list:
        return AsCategory.HYPERGIANT
    if asn not in relationships:
        logger.info("AS%s has no relationship data, classified as stub", asn)
        return AsCategory.STUB
    if not relationships[asn]:
        return AsCategory.STUB
    if average_cone is None:
        average_cone = transit_average_cone(relationships, customer_cones)
    if customer_cones.get(asn, 1) < average_cone:
        return AsCategory.TRANSIT1
    return AsCategory.TRANSIT2


def classify_all(relationships, tier1_list=(), hypergiant_list=(), extra_asns=()) -> dict:
    cones = customer_cones(relationships)
    avg = transit_average_cone(relationships, cones)
    asns = set(relationships) | set(tier1_list) | set(hypergiant_list) | set(extra_asns)
    for cust in relationships.values():
        asns.update(cust)
    tier1, hyper = set(tier1_list), set(hypergiant_list)
    return {a: classify_as(a, relationships, cones, tier1, hyper, avg) for a in sorted(asns)}


@dataclass(frozen=True)
class CandidateEvent:
    link: tuple
    prefix: str
    first_seen: int
    observers: frozenset = frozenset()
    category_pair: tuple | None = None
    observer_count: int = -1

    def __post_init__(self):
        a, b = self.link
        if a == b:
            raise ValueError("event link endpoints must differ")
        object.__setattr__(self, "link", edge_key(a, b))
        if self.observer_count < 0:
            object.__setattr__(self, "observer_count", len(self.observers))

    @property
    def as1(self):
        return self.link[0]

    @property
    def as2(self):
        return self.link[1]

    def with_pair(self, classification: Mapping) -> "CandidateEvent":
        pair = category_pair(classification.get(self.as1, AsCategory.STUB),
                             classification.get(self.as2, AsCategory.STUB))
        return CandidateEvent(self.link, self.prefix, self.first_seen, self.observers, pair,
                              self.observer_count)


def vp_adoptions(vp_id, updates: Iterable[BgpUpdate], snapshot: RibTable | None = None) -> list:
    """``(t, link, prefix)`` records for every link ``vp_id`` begins to use."""
    replay = VpReplayer(vp_id, snapshot)
    out = []
    for u in updates:
        if u.vp_id != vp_id:
            continue
        _, _, new_links = replay.apply(u)
        for link in new_links:
            out.append((u.timestamp, link, u.prefix))
    return out


def detect_candidates(updates, window=WINDOW, vp_count=None, snapshots=None,
                      classification=None) -> list[CandidateEvent]:
    """Links that at least two and fewer than half of the VPs start using
    for the same prefix within ``window`` seconds.

    Adoptions of a (link, prefix) are grouped into consecutive windows
    anchored at the first adoption not yet grouped.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    updates = list(updates)
    check_sorted(updates)
    snapshots = dict(snapshots or {})
    by_vp = defaultdict(list)
    for u in updates:
        by_vp[u.vp_id].append(u)
    vps = set(by_vp) | set(snapshots)
    if vp_count is None:
        vp_count = len(vps)

    adoptions = defaultdict(list)
    for vp in sorted(vps):
        for t, link, prefix in vp_adoptions(vp, by_vp.get(vp, ()), snapshots.get(vp)):
            adoptions[(link, prefix)].append((t, vp))

    out = []
    for (link, prefix), recs in adoptions.items():
        recs.sort(key=lambda r: r[0])
        i = 0
        while i < len(recs):
            t0 = recs[i][0]
            observers = set()
            j = i
            while j < len(recs) and recs[j][0] < t0 + window:
                observers.add(recs[j][1])
                j += 1
            n = len(observers)
            if n >= 2 and 2 * n < vp_count:
                ev = CandidateEvent(link, prefix, t0, frozenset(observers))
                out.append(ev.with_pair(classification) if classification is not None else ev)
            i = j
    out.sort(key=lambda e: (e.first_seen, e.link, e.prefix))
    return out


@dataclass
class EventSet:
    periods: list
    events: dict = field(default_factory=dict)
    per_period: int = DEFAULT_PER_PERIOD
    window: int = WINDOW
    mode: str = "balanced"

    @property
    def P(self) -> int:
        return len(self.periods)

    def period_events(self, p) -> list:
        """``(slot, event)`` pairs of period ``p`` in slot order."""
        return sorted(((s, e) for (pp, s), e in self.events.items() if pp == p),
                      key=lambda x: x[0])

    def fill_rate(self) -> float:
        target = self.P * self.per_period
        return len(self.events) / target if target else 0.0

    def fully_filled_periods(self) -> list:
        counts = defaultdict(int)
        for p, _ in self.events:
            counts[p] += 1
        return [p for p in range(self.P) if counts[p] == self.per_period]

    def pair_counts(self) -> dict:
        counts = {pair: 0 for pair in CATEGORY_PAIRS}
        for e in self.events.values():
            if e.category_pair is not None:
                counts[e.category_pair] += 1
        return counts


def _period_slots(start, end, window):
    n = (end - start) // window
    return [start + i * window for i in range(n)]


def balanced_sample(candidates, classification, P=DEFAULT_PERIODS, per_period=DEFAULT_PER_PERIOD,
                    timeframe=None, rng_seed=0, window=WINDOW, max_attempts=DEFAULT_MAX_ATTEMPTS,
                    mode="balanced") -> EventSet:
    """Draw ``P`` nonoverlapping windows and pick events in each.

    ``mode="balanced"`` takes one uniformly chosen event per category pair;
    ``mode="random"`` takes ``per_period`` events uniformly regardless of
    category (the unbalanced ablation). Periods are aligned on a
    ``window``-second grid over ``timeframe`` so they never overlap.
    """
    if mode not in ("balanced", "random"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    if mode == "balanced" and per_period != len(CATEGORY_PAIRS):
        raise ValueError(f"balanced sampling needs per_period={len(CATEGORY_PAIRS)}")
    candidates = sorted((c.with_pair(classification) for c in candidates),
                        key=lambda e: (e.first_seen, e.link, e.prefix))
    if timeframe is None:
        if not candidates:
            raise ValueError("timeframe required for an empty candidate pool")
        timeframe = (candidates[0].first_seen, candidates[-1].first_seen + window)
    start, end = timeframe
    grid = _period_slots(start, end, window)
    if len(grid) < P:
        raise ValueError(f"timeframe holds {len(grid)} periods of {window}s, {P} requested")

    by_slot = defaultdict(list)
    for c in candidates:
        if start <= c.first_seen < end:
            by_slot[(c.first_seen - start) // window].append(c)

    rng = np.random.default_rng(rng_seed)
    order = iter(rng.permutation(len(grid)).tolist())

    def pick(slot_idx):
        pool = by_slot.get(slot_idx, [])
        chosen = {}
        if mode == "balanced":
            per_pair = defaultdict(list)
            for c in pool:
                per_pair[c.category_pair].append(c)
            for i, pair in enumerate(CATEGORY_PAIRS):
                opts = per_pair.get(pair)
                if opts:
                    chosen[i] = opts[int(rng.integers(len(opts)))]
        else:
            k = min(per_period, len(pool))
            idx = sorted(rng.choice(len(pool), size=k, replace=False).tolist()) if k else []
            chosen = {i: pool[j] for i, j in enumerate(idx)}
        return chosen

    periods, events = [], {}
    remaining = len(grid)
    for p in range(P):
        best_slot, best = None, None
        # leave at least one unused grid slot for every later period
        attempts = min(max(1, max_attempts), remaining - (P - p - 1))
        for _ in range(attempts):
            slot_idx = next(order)
            remaining -= 1
            chosen = pick(slot_idx)
            if best is None or len(chosen) > len(best):
                best_slot, best = slot_idx, chosen
            if len(chosen) == per_period:
                break
        periods.append(grid[best_slot])
        for i, ev in best.items():
            events[(p, i)] = ev
    es = EventSet(periods, events, per_period, window, mode)
    if es.fill_rate() < 1.0:
        logger.warning("event set fill rate %.3f (%d of %d slots)", es.fill_rate(),
                       len(events), P * per_period)
    return es


def write_event_set(es: EventSet, fh) -> None:
    fh.write(f"#EVENTSET mode={es.mode} per_period={es.per_period} window={es.window}\n")
    for p, start in enumerate(es.periods):
        fh.write(f"#PERIOD {p} {start}\n")
    for (p, slot), e in sorted(es.events.items()):
        pair = format_pair(e.category_pair) if e.category_pair else "-"
        fh.write(f"{p}|{pair}|{e.as1}|{e.as2}|{e.prefix}|{e.first_seen}|{e.observer_count}\n")


def read_event_set(fh) -> EventSet:
    meta, periods, events = {}, {}, {}
    next_slot = defaultdict(int)
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#EVENTSET"):
            meta = dict(kv.split("=", 1) for kv in line.split()[1:])
            continue
        if line.startswith("#PERIOD"):
            _, p, start = line.split()
            periods[int(p)] = int(start)
            continue
        p, pair_s, a, b, prefix, first_seen, count = line.split("|")
        pair = None if pair_s == "-" else parse_pair(pair_s)
        ev = CandidateEvent((int(a), int(b)), prefix, int(first_seen), frozenset(), pair, int(count))
        p = int(p)
        if meta.get("mode", "balanced") == "balanced" and pair is not None:
            slot = CATEGORY_PAIRS.index(pair)
        else:
            slot = next_slot[p]
            next_slot[p] += 1
        events[(p, slot)] = ev
    ordered = [periods[p] for p in sorted(periods)]
    return EventSet(ordered, events, int(meta.get("per_period", DEFAULT_PER_PERIOD)),
                    int(meta.get("window", WINDOW)), meta.get("mode", "balanced"))


def write_candidates(cands, fh) -> None:
    for e in cands:
        fh.write(f"{e.as1}|{e.as2}|{e.prefix}|{e.first_seen}|{' '.join(sorted(e.observers))}\n")


def read_candidates(fh) -> list[CandidateEvent]:
    out = []
    for line in fh:
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        a, b, prefix, t, obs = line.split("|")
        out.append(CandidateEvent((int(a), int(b)), prefix, int(t), frozenset(obs.split())))
    return out
