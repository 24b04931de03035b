"""Spanning-tree split detector.

Builds the maximum spanning tree of the client correlation graph, deletes
the tree's lowest-weight edge, and flags the resulting subtree whose
average edge weight is higher. Colluding clients correlate strongly with
each other and weakly with everyone else, so the cheapest tree edge is an
attacker-to-normal bridge and the heavier side is the colluding group.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .gradients import CorrelationMatrix

if TYPE_CHECKING:
    from .density import DensityDiagnostics

logger = logging.getLogger(__name__)

# avg weight assigned to a subtree with no edges: a lone cut-off client
# behaves like the least-cohesive possible group
SINGLETON_AVG_WEIGHT = -1.0


@dataclass(frozen=True)
class Edge:
    """Undirected weighted edge between two clients, stored with u < v."""

    u: int
    v: int
    weight: float

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError(f"self-loop at vertex {self.u}")
        if self.u > self.v:
            raise ValueError(f"edge endpoints must be ordered, got ({self.u}, {self.v})")


@dataclass(frozen=True)
class MstDiagnostics:
    cut_edge: Edge
    flagged_avg_weight: float
    other_avg_weight: float
    tree: tuple[Edge, ...]
    ambiguous: bool = False


@dataclass(frozen=True)
class DetectionResult:
    """Clients flagged as attackers for one round, plus detector internals.

    Both detectors emit this type; diagnostics carry the removed cut edge
    and subtree averages (spanning-tree split) or the ordered peel trace
    (density peeling).
    """

    attackers: frozenset[int]
    diagnostics: MstDiagnostics | DensityDiagnostics | None = field(repr=False, default=None)

    def __post_init__(self):
        if not self.attackers:
            raise ValueError("detectors always emit a nonempty group")


class _UnionFind:
    """Union-find with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def sorted_edges(matrix: CorrelationMatrix) -> list[Edge]:
    """All edges of the complete client graph in deterministic greedy order:
    weight descending, ties broken by (u, v) ascending."""
    n = matrix.n
    edges = [
        Edge(u=i, v=j, weight=float(matrix.entries[i, j]))
        for i in range(n)
        for j in range(i + 1, n)
    ]
    edges.sort(key=lambda e: (-e.weight, e.u, e.v))
    return edges


def maximum_spanning_tree(matrix: CorrelationMatrix) -> list[Edge]:
    """Greedy Kruskal construction of the maximum-weight spanning tree.

    Edges are consumed in the sorted_edges order, skipping any edge that
    would close a cycle, until n-1 edges are placed.

    Raises:
        ValueError: if the graph has fewer than 3 clients (no meaningful
            two-subtree split exists after removing an edge).
    """
    n = matrix.n
    if n < 3:
        raise ValueError(f"need at least 3 clients for a spanning-tree split, got {n}")
    uf = _UnionFind(n)
    tree: list[Edge] = []
    for edge in sorted_edges(matrix):
        if uf.union(edge.u, edge.v):
            tree.append(edge)
            if len(tree) == n - 1:
                break
    return tree


def _subtree_members(n: int, edges: list[Edge], root: int) -> set[int]:
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    for e in edges:
        adjacency[e.u].append(e.v)
        adjacency[e.v].append(e.u)
    seen = {root}
    stack = [root]
    while stack:
        node = stack.pop()
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _avg_weight(edges: list[Edge]) -> float:
    if not edges:
        return SINGLETON_AVG_WEIGHT
    return sum(e.weight for e in edges) / len(edges)


def mst_ad(matrix: CorrelationMatrix) -> DetectionResult:
    """Flag attackers by cutting the maximum spanning tree at its weakest edge.

    The tree's minimum-weight edge (ties broken by the same deterministic
    edge order used during construction) is removed; of the two subtrees,
    the one with the strictly greater average edge weight is returned as
    the attacker set. A single-vertex subtree gets average weight -1 so it
    never wins. An exact tie flags the smaller subtree and is logged.

    Note: one subtree is always flagged, even if the round had no actual
    attackers; the method cannot represent "nobody colluded".
    """
    tree = maximum_spanning_tree(matrix)
    cut = min(tree, key=lambda e: (e.weight, e.u, e.v))
    remaining = [e for e in tree if e is not cut]

    side_a = _subtree_members(matrix.n, remaining, cut.u)
    side_b = _subtree_members(matrix.n, remaining, cut.v)
    edges_a = [e for e in remaining if e.u in side_a]
    edges_b = [e for e in remaining if e.u in side_b]
    avg_a = _avg_weight(edges_a)
    avg_b = _avg_weight(edges_b)

    ambiguous = avg_a == avg_b
    if ambiguous:
        # tie: prefer the smaller group, then lexicographically smaller members
        flagged = min((side_a, side_b), key=lambda side: (len(side), sorted(side)))
        flagged_avg, other_avg = avg_a, avg_b
        logger.warning(
            "spanning-tree split is ambiguous (equal subtree averages %.6f); "
            "flagging the smaller subtree", avg_a,
        )
    elif avg_a > avg_b:
        flagged, flagged_avg, other_avg = side_a, avg_a, avg_b
    else:
        flagged, flagged_avg, other_avg = side_b, avg_b, avg_a

    return DetectionResult(
        attackers=frozenset(flagged),
        diagnostics=MstDiagnostics(
            cut_edge=cut,
            flagged_avg_weight=flagged_avg,
            other_avg_weight=other_avg,
            tree=tuple(tree),
            ambiguous=ambiguous,
        ),
    )
