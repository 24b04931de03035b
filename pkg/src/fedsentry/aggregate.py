"""Server-side aggregation: weighted averaging with exclusion, and the
geometric-median baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .gradients import GradientUpdate

logger = logging.getLogger(__name__)

WEISZFELD_EPS = 1e-12  # distance floor when an iterate lands on a data point

DETECTORS = ("mst_ad", "density_ad")
POLICY_KINDS = ("fedavg", "geomed")


class NoIncludedClientsError(ValueError):
    """Every update was excluded; the round cannot produce a new model."""


@dataclass(frozen=True)
class AggregationPolicy:
    """How the server combines updates each round.

    kind "fedavg" with a detector drops the flagged clients before
    averaging; "geomed" replaces the weighted mean with the geometric
    median and never excludes anyone (it is not a detector).
    """

    kind: str = "fedavg"
    detector: str | None = None
    exclusion: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown aggregation kind {self.kind!r}")
        if self.detector is not None:
            if self.detector not in DETECTORS:
                raise ValueError(f"unknown detector {self.detector!r}")
            if self.kind != "fedavg":
                raise ValueError("detectors only gate fedavg aggregation")
            if not self.exclusion:
                raise ValueError("a detector-gated policy must exclude flagged clients")


def weighted_aggregate(
    global_params: np.ndarray,
    updates: list[GradientUpdate],
    excluded: set[int] = frozenset(),
) -> np.ndarray:
    """Sample-count-weighted average of the included clients' updates.

    Weights are renormalized over the included clients so they sum to 1;
    the sum runs in client-id ascending order for bitwise reproducibility.

    Raises:
        NoIncludedClientsError: when exclusion removes every update.
    """
    included = sorted(
        (u for u in updates if u.client_id not in excluded), key=lambda u: u.client_id
    )
    if not included:
        raise NoIncludedClientsError("all clients excluded from aggregation")
    weights = np.array([u.num_samples for u in included], dtype=np.float64)
    weights /= weights.sum()
    deltas = np.stack([u.delta for u in included])
    return global_params + (weights[:, None] * deltas).sum(axis=0)


def geometric_median(
    updates: list[GradientUpdate],
    tol: float = 1e-8,
    max_iters: int = 500,
) -> np.ndarray:
    """Geometric median of the update vectors via Weiszfeld iteration.

    Starts at the coordinate-wise mean and iterates

        x <- sum_i(d_i / max(||d_i - x||, eps)) / sum_i(1 / max(||d_i - x||, eps))

    until the step shrinks below tol. The result is the single robust
    aggregate delta to apply to the global model. If max_iters runs out a
    warning is logged and the last iterate is returned.
    """
    if not updates:
        raise ValueError("need at least one update")
    deltas = np.stack([u.delta for u in sorted(updates, key=lambda u: u.client_id)])
    x = deltas.mean(axis=0)
    for _ in range(max_iters):
        dists = np.maximum(np.linalg.norm(deltas - x, axis=1), WEISZFELD_EPS)
        inv = 1.0 / dists
        x_next = (deltas * inv[:, None]).sum(axis=0) / inv.sum()
        step = float(np.linalg.norm(x_next - x))
        x = x_next
        if step < tol:
            return x
    logger.warning("geometric median stopped after %d iterations above tol=%g", max_iters, tol)
    return x
