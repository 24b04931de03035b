"""Greedy density-peeling detector.

A vertex is *sparse* when deleting it strictly increases the density of
the remaining client graph. One pass walks the vertices from the highest
index down, permanently removing every sparse vertex it meets; the denser
of (removed set, survivor set) is declared the colluding group.

Density of a vertex set here is the mean edge weight of its induced
subgraph. A set with fewer than 2 vertices cannot form a colluding group
and gets the sentinel density -1, below any attainable mean.

``removal_condition_holds`` restates the peel decision in closed form --
a vertex is removed exactly when its residual average incident weight
falls below the current graph average -- and serves as an independent
cross-check of the peeling loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .gradients import CorrelationMatrix
from .mst import DetectionResult

logger = logging.getLogger(__name__)

EMPTY_SET_DENSITY = -1.0  # sentinel for |S| < 2, below any true mean edge weight


@dataclass(frozen=True)
class PeelStep:
    """One vertex examination during the peel.

    density_before is the active-set density at examination time;
    density_after is what the density would become (and does become, when
    removed is True) without the vertex.
    """

    vertex: int
    density_before: float
    density_after: float
    removed: bool


@dataclass(frozen=True)
class DensityDiagnostics:
    trace: tuple[PeelStep, ...]
    sparse_density: float
    survivor_density: float
    ambiguous: bool = False


def density(matrix: CorrelationMatrix, subset) -> float:
    """Mean edge weight of the subgraph induced by ``subset``.

    Returns EMPTY_SET_DENSITY for sets with fewer than 2 vertices.
    """
    idx = sorted(subset)
    if len(idx) < 2:
        return EMPTY_SET_DENSITY
    if idx[0] < 0 or idx[-1] >= matrix.n or len(set(idx)) != len(idx):
        raise ValueError(f"subset {idx} is not a set of valid vertex ids")
    sub = matrix.entries[np.ix_(idx, idx)]
    k = len(idx)
    # symmetric with zero diagonal: full sum double-counts each pair
    return float(sub.sum()) / (k * (k - 1))


def density_ad(matrix: CorrelationMatrix) -> DetectionResult:
    """Flag attackers by peeling sparse vertices off the correlation graph.

    Vertices are visited exactly once, from index n-1 down to 0, over the
    shrinking active set; a vertex is removed iff removal strictly raises
    the active set's density. Afterwards the peeled set and the survivors
    are compared on their original correlations and the denser side is
    flagged; an exact tie keeps the survivors and is logged.

    Raises:
        ValueError: if the graph has fewer than 3 clients.
    """
    n = matrix.n
    if n < 3:
        raise ValueError(f"need at least 3 clients to peel, got {n}")

    active = set(range(n))
    sparse_list: list[int] = []
    trace: list[PeelStep] = []
    for vertex in range(n - 1, -1, -1):
        if vertex not in active:
            continue
        before = density(matrix, active)
        after = density(matrix, active - {vertex})
        removed = after > before
        trace.append(
            PeelStep(vertex=vertex, density_before=before, density_after=after, removed=removed)
        )
        if removed:
            sparse_list.append(vertex)
            active.remove(vertex)

    sparse_density = density(matrix, sparse_list)
    survivor_density = density(matrix, active)
    ambiguous = sparse_density == survivor_density
    if ambiguous:
        logger.warning(
            "peel ended with equal densities (%.6f); flagging the survivor set",
            survivor_density,
        )
    flagged = set(sparse_list) if sparse_density > survivor_density else active

    return DetectionResult(
        attackers=frozenset(flagged),
        diagnostics=DensityDiagnostics(
            trace=tuple(trace),
            sparse_density=sparse_density,
            survivor_density=survivor_density,
            ambiguous=ambiguous,
        ),
    )


def removal_condition_holds(
    matrix: CorrelationMatrix,
    removed_so_far: list[int],
    candidate: int,
) -> bool:
    """Closed-form peel decision for ``candidate`` after ``removed_so_far``.

    With S the total edge-weight sum of the original graph and
    k = len(removed_so_far), the active graph's average edge weight is

        2 * (S - sum of removed rows + sum of pairs within removed)
            / ((n - k) * (n - k - 1))

    and the candidate's residual average incident weight is

        (row_sum(candidate) - its edges into the removed set) / (n - k - 1).

    The candidate is removed exactly when the latter is strictly below the
    former; this is algebraically the same test as
    density(active - {candidate}) > density(active).
    """
    n = matrix.n
    k = len(removed_so_far)
    removed = set(removed_so_far)
    if len(removed) != k:
        raise ValueError("removed_so_far contains duplicates")
    if candidate in removed:
        raise ValueError(f"candidate {candidate} was already removed")
    if n - k < 3:
        raise ValueError(f"active set must have at least 3 vertices, has {n - k}")

    entries = matrix.entries
    total = float(entries.sum()) / 2.0
    removed_rows = float(sum(entries[j].sum() for j in removed_so_far))
    within_removed = float(
        sum(
            entries[a, b]
            for i, a in enumerate(removed_so_far)
            for b in removed_so_far[i + 1 :]
        )
    )
    graph_avg = 2.0 * (total - removed_rows + within_removed) / ((n - k) * (n - k - 1))

    candidate_degree = float(entries[candidate].sum()) - float(
        sum(entries[candidate, j] for j in removed_so_far)
    )
    residual_avg = candidate_degree / (n - k - 1)
    return residual_avg < graph_avg
