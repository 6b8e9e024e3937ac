""" Divergences between two discrete distributions given as {value: probability}
maps. Both are evaluated over the union of their supports."""

from collections import Counter

import numpy as np
from scipy.stats import entropy

from ..errors import EmptyList, NotNormalized

NORMALIZATION_TOL = 1e-9

def empirical_distribution(values):
    """Relative frequencies of a list of values."""

    if len(values) == 0:
        raise EmptyList("Cannot build a distribution from an empty list.")
    counts = Counter(values)
    return {value: count / len(values) for value, count in counts.items()}

def aligned(p, q):
    """Probability vectors of p and q over the sorted union support."""

    for name, dist in (("p", p), ("q", q)):
        total = sum(dist.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NotNormalized(f"{name} sums to {total}, not 1.")
    support = sorted(set(p) | set(q), key=str)
    return (np.array([p.get(x, 0.0) for x in support], dtype=np.float64),
            np.array([q.get(x, 0.0) for x in support], dtype=np.float64))

def kl_divergence(p, m):
    """Base 2 KL divergence of two aligned vectors, 0 log 0 = 0."""
    return float(entropy(p, m, base=2))

def jsd(p, q):
    """Jensen-Shannon divergence with base 2 logarithms, in [0, 1]."""

    p, q = aligned(p, q)
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)

def tvd(p, q):
    """Total variation distance."""

    p, q = aligned(p, q)
    return float(0.5 * np.abs(p - q).sum())
