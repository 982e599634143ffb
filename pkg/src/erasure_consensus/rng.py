"""Deterministic counter-based randomness.

Every random decision in the package is a pure function of a 64-bit seed
and a tuple of integer coordinates (a tag plus indices such as edge key,
round, slot, trial).  There is no mutable generator state, so any draw can
be replayed in isolation: the erasure bit for round k does not depend on
how many draws happened before it, on the order of queries, or on the
platform.

The mixing function is the splitmix64 output permutation applied once per
coordinate, seeded by the permuted seed itself.  splitmix64 is a strong
64-bit finalizer with full avalanche; chaining it over the coordinates
gives independent-looking streams for distinct coordinate tuples.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

# Tags namespace the coordinate space so that, e.g., channel draws can
# never collide with initial-condition draws under the same seed.
TAG_CHANNEL = 0x01
TAG_TRIAL = 0x02
TAG_INIT = 0x03
TAG_CODE = 0x04
TAG_GRAPH = 0x05

_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer: bijective avalanche permutation of a 64-bit word."""
    z = (z + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _M1) & _MASK64
    z = ((z ^ (z >> 27)) * _M2) & _MASK64
    return z ^ (z >> 31)


def mix(seed: int, *coords: int) -> int:
    """Uniform 64-bit word for (seed, coords), independent across tuples."""
    h = mix64(seed & _MASK64)
    for c in coords:
        h = mix64(h ^ (c & _MASK64))
    return h


def derive_seed(seed: int, *coords: int) -> int:
    """Sub-seed for an independent stream (trials, code salts, ...)."""
    return mix(seed, *coords)


def threshold(p: float) -> int:
    """Integer cut so that P(mix(...) < threshold(p)) == p up to 2**-53.

    Exact at the endpoints: p <= 0 accepts nothing, p >= 1 accepts all
    2**64 words.
    """
    if p <= 0.0:
        return 0
    if p >= 1.0:
        return 1 << 64
    return int(p * 2.0**64)


def uniform01(word: int) -> float:
    """Map a 64-bit word to [0, 1) with 53-bit resolution."""
    return (word >> 11) * (1.0 / (1 << 53))


def mix_vec(seed: int | np.ndarray, *coords: int | np.ndarray) -> np.ndarray:
    """Vectorized mix() over numpy uint64 arrays with broadcasting.

    Bit-for-bit identical to the scalar path; used by the Monte Carlo
    engines where one call covers all trials at once.
    """
    with np.errstate(over="ignore"):
        h = _mix64_vec(np.asarray(seed, dtype=np.uint64))
        for c in coords:
            h = _mix64_vec(h ^ np.asarray(c, dtype=np.uint64))
    return h


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))
