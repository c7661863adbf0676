"""Chow-Liu edge sparsification with Kruskal's algorithm."""

from __future__ import annotations

from collections.abc import Hashable, Iterable

from ..graph import EdgeKind, PoseGraph, information_weight


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.size: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        self.add(x)
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


def max_spanning_forest(edges, forced=()) -> list:
    """Kruskal on ``(weight, key, u, v)`` tuples, heaviest first.

    ``forced`` pairs ``(u, v)`` are merged before any weighted edge is
    considered, so the result is a maximum spanning forest of the
    remaining structure.  Returns the accepted keys in acceptance order;
    ties are broken by the smaller key.
    """
    uf = UnionFind()
    for u, v in forced:
        uf.union(u, v)
    kept = []
    for w, key, u, v in sorted(edges, key=lambda t: (-t[0], t[1])):
        if uf.union(u, v):
            kept.append(key)
    return kept


def is_removable(kind: EdgeKind) -> bool:
    return kind is not EdgeKind.ODOMETRY


def chow_liu_sparsify(graph: PoseGraph) -> int:
    """Reduce the removable edges to a maximum-mutual-information spanning forest.

    Odometry edges carry the trajectory and are never touched.  Every
    other edge is weighted by the information heuristic of its
    information matrix; within each connected component of removable
    edges only a maximum-weight spanning tree survives.  Returns the
    number of edges removed.
    """
    candidates = []
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        if is_removable(e.kind):
            candidates.append((information_weight(e.information), eid, e.src, e.dst))
    kept = set(max_spanning_forest(candidates))
    removed = 0
    for _, eid, _, _ in candidates:
        if eid not in kept:
            graph.remove_edge(eid)
            removed += 1
    return removed
