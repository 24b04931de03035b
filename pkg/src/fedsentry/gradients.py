"""Client weight updates and the pairwise correlation matrix they induce.

Every client sends one flat weight-update vector per round. Colluding
clients train toward a shared poisoning objective, so their updates stay
mutually correlated; the n x n Pearson matrix built here is the weighted
complete graph that both detectors operate on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

CLAMP_TOL = 1e-12  # rounding overshoot allowed before clamping to [-1, 1]


class DegenerateInputError(ValueError):
    """A correlation was requested for a constant (zero-variance) vector."""


@dataclass(frozen=True)
class GradientUpdate:
    """One client's flattened weight delta for a round.

    Attributes:
        client_id: index of the sending client, in [0, n).
        delta: flat weight-update vector (locally trained params minus the
            broadcast global params).
        num_samples: size of the client's local training shard.
    """

    client_id: int
    delta: np.ndarray
    num_samples: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.delta.ndim != 1:
            raise ValueError(f"delta must be a flat vector, got shape {self.delta.shape}")


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric n x n matrix of pairwise correlations with zero diagonal.

    Entries live in [-1, 1]; entry (i, j) is the edge weight between
    clients i and j in the complete client graph.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"entries must be square, got shape {e.shape}")
        if e.shape[0] < 2:
            raise ValueError("correlation matrix needs at least 2 clients")
        if not np.array_equal(e, e.T):
            raise ValueError("entries must be symmetric")
        if np.any(np.diag(e) != 0.0):
            raise ValueError("diagonal must be zero")
        if np.any(np.abs(e) > 1.0) or not np.all(np.isfinite(e)):
            raise ValueError("off-diagonal entries must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_rows(self) -> list[list[float]]:
        """Row-major list-of-lists form for JSON diagnostics."""
        return [[float(x) for x in row] for row in self.entries]


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation coefficient of two equal-length vectors.

    Each vector is centered by its own mean. The quotient is clamped to
    [-1, 1] to absorb floating-point overshoot on (anti)parallel inputs.

    Raises:
        DegenerateInputError: if either vector is constant.
        ValueError: on length mismatch or fewer than 2 components.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must be flat and equal-length, got {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("vectors must have at least 2 components")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt(np.dot(ac, ac) * np.dot(bc, bc))
    if denom == 0.0:
        raise DegenerateInputError("constant vector has no defined correlation")
    r = float(np.dot(ac, bc) / denom)
    if abs(r) > 1.0 + CLAMP_TOL:
        raise ValueError(f"correlation {r} exceeds clamp tolerance")
    return min(1.0, max(-1.0, r))


def build_correlation_matrix(
    updates: list[GradientUpdate],
    centering: str = "per_vector",
) -> CorrelationMatrix:
    """Build the client correlation graph from one round's updates.

    Each unordered pair is computed exactly once and mirrored, so the
    result is symmetric bitwise. Row/column i corresponds to client id i;
    the updates must cover ids 0..n-1 exactly (any list order).

    Args:
        updates: one GradientUpdate per client.
        centering: "per_vector" centers every delta by its own mean
            (standard Pearson); "global_mean" centers all deltas by the
            mean delta across clients before the cosine quotient.

    Raises:
        ValueError: fewer than 2 updates, mismatched delta lengths, ids not
            covering 0..n-1, or unknown centering mode.

    A client whose delta is constant cannot correlate with anyone; its row
    and column are set to 0 with a warning instead of failing the round.
    """
    if centering not in ("per_vector", "global_mean"):
        raise ValueError(f"unknown centering mode: {centering!r}")
    n = len(updates)
    if n < 2:
        raise ValueError("need at least 2 updates")
    ids = sorted(u.client_id for u in updates)
    if ids != list(range(n)):
        raise ValueError(f"client ids must cover 0..{n - 1} exactly, got {ids}")
    by_id = {u.client_id: u for u in updates}
    d = by_id[0].delta.size
    if d < 2:
        raise ValueError("delta vectors must have at least 2 components")
    for u in updates:
        if u.delta.size != d:
            raise ValueError(
                f"client {u.client_id} delta length {u.delta.size} != expected {d}"
            )

    deltas = np.stack([np.asarray(by_id[i].delta, dtype=np.float64) for i in range(n)])
    if centering == "per_vector":
        centered = deltas - deltas.mean(axis=1, keepdims=True)
    else:
        centered = deltas - deltas.mean(axis=0, keepdims=True)

    norms_sq = np.einsum("ij,ij->i", centered, centered)
    degenerate = [i for i in range(n) if norms_sq[i] == 0.0]
    for i in degenerate:
        logger.warning(
            "client %d sent a degenerate (constant) update; correlations set to 0", i
        )

    entries = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        if norms_sq[i] == 0.0:
            continue
        for j in range(i + 1, n):
            if norms_sq[j] == 0.0:
                continue
            r = float(np.dot(centered[i], centered[j]) / np.sqrt(norms_sq[i] * norms_sq[j]))
            r = min(1.0, max(-1.0, r))
            entries[i, j] = r
            entries[j, i] = r
    return CorrelationMatrix(entries=entries)
