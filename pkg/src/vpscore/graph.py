"""Per-VP undirected weighted AS graphs.

An edge weight is the number of RIB routes whose (prepending-collapsed) AS
path traverses that edge. Nodes are reference counted by the number of
routes that contain them, so a single-AS path keeps its node alive even
though it contributes no edge.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx

from .ingest import RibTable


class GraphConsistencyError(RuntimeError):
    pass


def collapse_path(as_path: Iterable[int]) -> tuple:
    out = []
    for asn in as_path:
        if not out or out[-1] != asn:
            out.append(asn)
    return tuple(out)


def edge_key(a: int, b: int) -> tuple:
    return (a, b) if a <= b else (b, a)


def path_edges(as_path) -> list[tuple]:
    """Undirected edges of a path after collapsing prepends (one per hop)."""
    p = collapse_path(as_path)
    return [edge_key(p[i], p[i + 1]) for i in range(len(p) - 1)]


def path_links(as_path) -> frozenset:
    return frozenset(path_edges(as_path))


@dataclass
class VpGraph:
    vp_id: str
    as_of: int = 0
    edges: dict = field(default_factory=dict)
    node_refs: Counter = field(default_factory=Counter)

    @property
    def nodes(self) -> set:
        return set(self.node_refs)

    def has_edge(self, a, b) -> bool:
        return edge_key(a, b) in self.edges

    def weight(self, a, b) -> int:
        return self.edges.get(edge_key(a, b), 0)

    def total_weight(self) -> int:
        return sum(self.edges.values())

    def copy(self) -> "VpGraph":
        return VpGraph(self.vp_id, self.as_of, dict(self.edges), Counter(self.node_refs))

    def _add_path(self, as_path):
        p = collapse_path(as_path)
        for asn in set(p):
            self.node_refs[asn] += 1
        for e in path_edges(p):
            self.edges[e] = self.edges.get(e, 0) + 1

    def _remove_path(self, as_path):
        p = collapse_path(as_path)
        for e in path_edges(p):
            w = self.edges.get(e)
            if w is None:
                raise GraphConsistencyError(f"edge {e} missing from graph of {self.vp_id}")
            if w == 1:
                del self.edges[e]
            else:
                self.edges[e] = w - 1
        for asn in set(p):
            refs = self.node_refs.get(asn, 0)
            if refs <= 0:
                raise GraphConsistencyError(f"node {asn} missing from graph of {self.vp_id}")
            if refs == 1:
                del self.node_refs[asn]
            else:
                self.node_refs[asn] = refs - 1

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.node_refs)
        for (a, b), w in self.edges.items():
            g.add_edge(a, b, weight=w, length=1.0 / w)
        return g

    def edge_list_lines(self) -> list[str]:
        rows = sorted(self.edges.items())
        return [f"{a} {b} {w}" for (a, b), w in rows]

    def __eq__(self, other):
        if not isinstance(other, VpGraph):
            return NotImplemented
        return self.edges == other.edges and self.node_refs == other.node_refs


def build_graph(rib: RibTable) -> VpGraph:
    g = VpGraph(rib.vp_id, rib.as_of)
    for route in rib.routes.values():
        g._add_path(route.as_path)
    return g


def apply_route_change(graph: VpGraph, old_route=None, new_route=None) -> VpGraph:
    """Swap one prefix's route in place: remove ``old_route``, add ``new_route``."""
    if old_route:
        graph._remove_path(old_route)
    if new_route:
        graph._add_path(new_route)
    return graph


def write_edge_list(graph: VpGraph, fh) -> None:
    for line in graph.edge_list_lines():
        fh.write(line + "\n")


class VpReplayer:
    """RIB plus graph of one VP, advanced update by update."""

    def __init__(self, vp_id: str, snapshot: RibTable | None = None):
        self.rib = snapshot.copy() if snapshot is not None else RibTable(vp_id, 0)
        self.graph = build_graph(self.rib)

    def apply(self, update) -> tuple:
        """Apply one update; return ``(old_path, new_path, new_links)``.

        ``new_links`` are the edges of the new path absent from the graph
        immediately before the update.
        """
        old = self.rib.routes.get(update.prefix)
        old_path = old.as_path if old else None
        new_path = None if update.is_withdraw else update.as_path
        new_links = ()
        if new_path:
            new_links = tuple(e for e in dict.fromkeys(path_edges(new_path))
                              if e not in self.graph.edges)
        self.rib.apply(update)
        apply_route_change(self.graph, old_path, new_path)
        self.graph.as_of = self.rib.as_of
        return old_path, new_path, new_links
