"""Shared fuzz helpers for the detector test suites."""

import numpy as np
import pytest

from fedsentry.gradients import CorrelationMatrix


def random_correlation_matrix(rng, n):
    """Symmetric matrix with zero diagonal and entries uniform in (-1, 1)."""
    upper = rng.uniform(-1.0, 1.0, size=(n, n))
    entries = np.triu(upper, 1)
    entries = entries + entries.T
    return CorrelationMatrix(entries=entries)


def banded_matrix(rng, n, attacker_ids, margin, width=0.05):
    """Matrix whose entries fall into three separated bands.

    Every attacker-attacker entry exceeds every normal-normal entry, which
    exceeds every attacker-normal entry, with at least ``margin`` between
    consecutive bands.
    """
    attacker_ids = set(attacker_ids)
    an_lo = rng.uniform(-0.8, -0.2)
    an_hi = an_lo + width
    nn_lo = an_hi + margin + rng.uniform(0.0, 0.3)
    nn_hi = nn_lo + width
    aa_lo = nn_hi + margin + rng.uniform(0.0, 0.3)
    aa_hi = min(aa_lo + width, 0.98)

    entries = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if i in attacker_ids and j in attacker_ids:
                w = rng.uniform(aa_lo, aa_hi)
            elif i not in attacker_ids and j not in attacker_ids:
                w = rng.uniform(nn_lo, nn_hi)
            else:
                w = rng.uniform(an_lo, an_hi)
            entries[i, j] = entries[j, i] = w
    return CorrelationMatrix(entries=entries)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
