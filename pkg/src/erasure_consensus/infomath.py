"""Binary entropy, its inverse, and Bernoulli KL divergence, all in bits.

These are the scalar ingredients of the large-deviation tail bounds; they
are kept separate and dependency-free so the bound evaluators and the
coding-rate thresholds share one definition.
"""

from __future__ import annotations

import math


def entropy(x: float) -> float:
    """Binary entropy H(x) in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"entropy argument must be in [0,1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def inv_entropy(y: float, tol: float = 1e-12) -> float:
    """Inverse of H on [0, 1/2]: the unique x <= 1/2 with H(x) = y.

    Bisection; endpoints are exact (y=0 -> 0, y=1 -> 1/2).
    """
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"inv_entropy argument must be in [0,1], got {y}")
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kl_bernoulli(q: float, p: float) -> float:
    """KL divergence D(q || p) between Bernoulli laws, in bits.

    Infinite when p is degenerate and q puts mass where p has none.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"first argument must be in [0,1], got {q}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"second argument must be in [0,1], got {p}")
    if p == 0.0:
        return 0.0 if q == 0.0 else math.inf
    if p == 1.0:
        return 0.0 if q == 1.0 else math.inf
    acc = 0.0
    if q > 0.0:
        acc += q * math.log2(q / p)
    if q < 1.0:
        acc += (1.0 - q) * math.log2((1.0 - q) / (1.0 - p))
    # Divergence is nonnegative by definition; round-off near q == p can
    # leave a stray -1e-16 that would flip sign tests downstream.
    return max(acc, 0.0)
