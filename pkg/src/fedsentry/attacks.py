"""Bidirectional label-flipping attack on client shards."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import DataShard

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackConfig:
    """A resolved collusion scenario: which clients flip which label pair.

    attacker_fraction is the scenario's m (fraction of all clients that
    collude); attacker_ids holds the round(m * n) compromised client ids.
    Collusion needs at least 2 attackers.
    """

    flip_pair: tuple[int, int]
    attacker_fraction: float
    attacker_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        a, b = self.flip_pair
        if a == b:
            raise ValueError("flip pair must name two distinct classes")
        if not 0.0 <= self.attacker_fraction < 1.0:
            raise ValueError(f"attacker fraction must be in [0, 1), got {self.attacker_fraction}")
        if self.attacker_ids and len(self.attacker_ids) < 2:
            raise ValueError("collusion needs at least 2 attackers")


def choose_attackers(n: int, fraction: float, seed: int) -> frozenset[int]:
    """Pick round(fraction * n) client ids uniformly without replacement.

    Deterministic for a given seed; empty when fraction is 0.
    """
    count = round(fraction * n)
    if count == 0:
        return frozenset()
    if count < 2:
        raise ValueError(f"round({fraction} * {n}) = {count} attackers; collusion needs >= 2")
    rng = np.random.default_rng(seed)
    ids = rng.choice(n, size=count, replace=False)
    return frozenset(int(i) for i in ids)


def flip_labels(shard: DataShard, flip_pair: tuple[int, int]) -> DataShard:
    """Swap two class labels everywhere in a shard (features untouched).

    Applying the same flip twice restores the original shard.
    """
    a, b = flip_pair
    if a == b or a < 0 or b < 0:
        raise ValueError(f"invalid flip pair ({a}, {b})")
    labels = shard.labels.copy()
    mask_a = shard.labels == a
    mask_b = shard.labels == b
    labels[mask_a] = b
    labels[mask_b] = a
    return DataShard(features=shard.features, labels=labels, owner=shard.owner)
