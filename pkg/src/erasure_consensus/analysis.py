"""Exact second-moment analysis and large-deviation tail bounds.

For the uncoded protocol the deviation from the initial average evolves
as dev_{k+1} = W_k dev_k with W_k = I - eps * L_k drawn iid from the
erasure pattern distribution.  Everything mean-square is captured by

    Gamma = E[W^T (x) W^T]        ((x) the Kronecker product),

since E||dev_k||^2 = (dev0 (x) dev0)^T Gamma^k vec(I).  `gamma_exact`
builds Gamma by enumerating all erasure patterns, which is exact and
cheap for the small graphs where this matters; pattern counts grow as
2^|E| (symmetric) or 4^|E| (asymmetric), so edge counts are capped.

Symmetric patterns keep every W doubly stochastic: the average is
preserved, the mean-square error contracts at rate lambda2(Gamma) per
round, and sqrt(lambda2) is the per-round factor comparable with the
noiseless factor mu.  Asymmetric patterns do not preserve the average;
the state still reaches consensus, but on a random value, and the
mean-square error converges to a positive limit computed from the
eigenvalue-1 eigenvector of Gamma.

The tail bounds cover the coded protocols: two Chernoff-style bounds on
the probability that a repetition-coded node falls below rate R' (one
via receiver degrees, one via whole-rounds-without-erasure), and one
bound driven by the error exponent beta of an anytime code.  Each
returns a BoundReport; outside its validity regime a bound carries no
information and its value is clamped to the trivial 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .channel import MODES
from .errors import (
    InternalConsistencyError,
    NonConvergentPower,
    TooManyEdges,
    WrongMode,
)
from .graphs import Graph
from .infomath import entropy, kl_bernoulli
from .spectral import spectral_summary, sym_eigenvalues

MAX_EDGES_SYMMETRIC = 20
MAX_EDGES_ASYMMETRIC = 10

_POWER_TOL = 1e-12
_POWER_MAX_ITERS = 10_000


@dataclass(eq=False)
class GammaAnalysis:
    """Exact Gamma = E[W^T (x) W^T] for one (graph, eps, p, mode)."""

    graph: Graph
    mode: str
    eps: float
    p: float
    gamma: np.ndarray

    @cached_property
    def lambda2_magnitude(self) -> float:
        """Spectral radius of Gamma on the average-free subspace.

        The mean-square recursion starts at dev (x) dev with 1^T dev = 0
        and never leaves span{x (x) y : x, y orthogonal to 1} (every
        pattern matrix fixes 1 and is symmetric), so the contraction
        rate is Gamma's spectral radius there.  Deflating only the
        1 (x) 1 direction would be wrong: mixed modes like 1 (x) z decay
        at first-moment rates that can dominate the spectrum without
        ever being excited.  Projecting with the centering matrix on
        both Kronecker factors removes all of them.  Norm-growth power
        iteration does the work; if it stalls, an exact symmetric
        eigendecomposition settles it.
        """
        if self.mode != "symmetric":
            raise WrongMode("lambda2 deflation uses the symmetric-mode limit")
        n = self.graph.n_nodes
        n2 = self.gamma.shape[0]
        center = np.eye(n) - np.full((n, n), 1.0 / n)
        proj = np.kron(center, center)
        d = proj @ self.gamma @ proj
        rng = np.random.default_rng(2718)
        v = rng.standard_normal(n2)
        v /= np.linalg.norm(v)
        prev = None
        for _ in range(_POWER_MAX_ITERS):
            w = d @ v
            lam = float(np.linalg.norm(w))
            if lam < 1e-300:
                return 0.0
            v = w / lam
            if prev is not None and abs(lam - prev) <= _POWER_TOL * max(1.0, lam):
                return lam
            prev = lam
        eigs = sym_eigenvalues(d)
        return float(np.max(np.abs(eigs)))

    @cached_property
    def limit_vector(self) -> np.ndarray:
        """v with Gamma^k -> v 1^T (normalized 1^T v = 1).

        Computed by power iteration from vec(I) and independently
        cross-checked by repeated squaring; disagreement raises, and a
        secondary eigenvalue too close to 1 for either route raises
        NonConvergentPower.
        """
        gamma = self.gamma
        n = self.graph.n_nodes
        v = np.eye(n).reshape(-1)
        v = v / v.sum()
        converged = False
        for _ in range(_POWER_MAX_ITERS):
            w = gamma @ v
            diff = float(np.max(np.abs(w - v)))
            v = w
            if diff <= _POWER_TOL * max(1.0, float(np.max(np.abs(v)))):
                converged = True
                break
        squared = gamma
        for _ in range(19):
            squared = squared @ squared
        v0 = np.eye(n).reshape(-1)
        v0 = v0 / v0.sum()
        half = squared @ v0
        full = (squared @ squared) @ v0
        if converged:
            if float(np.max(np.abs(full - v))) > 1e-8:
                raise InternalConsistencyError(
                    "power iteration and repeated squaring disagree on the "
                    "limit of Gamma^k"
                )
        else:
            if float(np.max(np.abs(full - half))) > 1e-10:
                raise NonConvergentPower(
                    "secondary spectrum of Gamma too close to 1 to resolve"
                )
            v = full
        return v / float(np.sum(v))


def _pattern_w(n: int, eps: float, delivered: list[tuple[int, int]]) -> np.ndarray:
    w = np.eye(n)
    for v, u in delivered:
        w[v, v] -= eps
        w[v, u] += eps
    return w


def gamma_exact(g: Graph, eps: float, p: float, mode: str = "symmetric") -> GammaAnalysis:
    """Build Gamma by exhaustive erasure-pattern enumeration."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {p}")
    spectral_summary(g, eps)
    if mode == "symmetric":
        if g.edge_count > MAX_EDGES_SYMMETRIC:
            raise TooManyEdges(
                f"{g.edge_count} edges need 2^{g.edge_count} symmetric patterns"
            )
        links = [((i, j), (j, i)) for i, j in g.edges]
    else:
        if g.edge_count > MAX_EDGES_ASYMMETRIC:
            raise TooManyEdges(
                f"{g.edge_count} edges need 4^{g.edge_count} asymmetric patterns"
            )
        links = [(pair,) for pair in g.directed_pairs]
    n = g.n_nodes
    q = 1.0 - p
    gamma = np.zeros((n * n, n * n))
    for bits in range(1 << len(links)):
        ones = bits.bit_count()
        prob = q**ones * p ** (len(links) - ones)
        if prob == 0.0:
            continue
        delivered = [
            pair
            for idx, group in enumerate(links)
            if bits >> idx & 1
            for pair in group
        ]
        wt = _pattern_w(n, eps, delivered).T
        gamma += prob * np.kron(wt, wt)
    return GammaAnalysis(graph=g, mode=mode, eps=eps, p=p, gamma=gamma)


def uncoded_sym_rate(ga: GammaAnalysis) -> float:
    """Per-round mean-square contraction factor sqrt(lambda2(Gamma))."""
    if ga.mode != "symmetric":
        raise WrongMode("contraction factor is defined for the symmetric mode")
    return math.sqrt(ga.lambda2_magnitude)


def asym_limit_mse(ga: GammaAnalysis, x0) -> float:
    """Limit of E||x_k - avg(x0) 1||^2 (zero in the symmetric mode)."""
    x0 = np.asarray(x0, dtype=float)
    n = ga.graph.n_nodes
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    dev = x0 - np.mean(x0)
    return float(np.kron(dev, dev) @ ga.limit_vector * n)


def msq_trajectory(ga: GammaAnalysis, x0, k_max: int) -> np.ndarray:
    """E||x_k - avg(x0) 1||^2 for k = 0..k_max, exactly."""
    x0 = np.asarray(x0, dtype=float)
    n = ga.graph.n_nodes
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    dev = x0 - np.mean(x0)
    lhs = np.kron(dev, dev)
    v = np.eye(n).reshape(-1)
    out = np.empty(k_max + 1)
    out[0] = float(lhs @ v)
    for k in range(1, k_max + 1):
        v = ga.gamma @ v
        out[k] = float(lhs @ v)
    return out


# ----------------------------------------------------------------------
# Tail bounds on P(min_v n_v(M) < M R').


@dataclass(frozen=True)
class BoundReport:
    """One evaluated tail bound.

    value_raw is the bound as computed (can exceed 1, or be infinite
    outside the validity regime); value clamps it to the trivial 1.
    decaying says whether the per-round exponent is positive, i.e.
    whether the bound vanishes as m_rounds grows; threshold_rate is the
    supremum of rates at which this bound family decays.
    """

    bound_id: str
    n_nodes: int
    max_degree: int
    edge_count: int
    m_rounds: int
    r_prime: float
    p: float | None
    beta: float | None
    exponent: float
    value_raw: float
    value: float
    decaying: bool
    valid_regime: bool
    threshold_rate: float


def _check_bound_args(m_rounds: int, r_prime: float) -> None:
    if m_rounds < 1:
        raise ValueError("m_rounds must be positive")
    if not 0.0 <= r_prime < 1.0:
        raise ValueError(f"rate threshold must lie in [0, 1), got {r_prime}")


def _pow2(x: float) -> float:
    if x == -math.inf:
        return 0.0
    try:
        return 2.0**x
    except OverflowError:
        return math.inf


def _finish(
    bound_id, g, m_rounds, r_prime, p, beta, exponent, valid, threshold
) -> BoundReport:
    value_raw = g.n_nodes * _pow2(-m_rounds * exponent) if valid else math.inf
    return BoundReport(
        bound_id=bound_id,
        n_nodes=g.n_nodes,
        max_degree=g.max_degree,
        edge_count=g.edge_count,
        m_rounds=m_rounds,
        r_prime=r_prime,
        p=p,
        beta=beta,
        exponent=exponent,
        value_raw=value_raw,
        value=min(value_raw, 1.0),
        decaying=bool(valid and exponent > 0.0),
        valid_regime=bool(valid),
        threshold_rate=threshold,
    )


def tail_bound_degree(g: Graph, m_rounds: int, r_prime: float, p: float) -> BoundReport:
    """Union bound over nodes with a per-receiver Chernoff argument.

    Counts rounds in which a node hears all of its neighbors; the
    exponent is D(1-R' || p) - log2(max_degree + 1) bits per round and
    the argument needs R' < 1 - p.
    """
    _check_bound_args(m_rounds, r_prime)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {p}")
    exponent = kl_bernoulli(1.0 - r_prime, p) - math.log2(g.max_degree + 1)
    valid = r_prime < 1.0 - p
    return _finish(
        "degree", g, m_rounds, r_prime, p, None, exponent, valid,
        guaranteed_rate_degree(p, g),
    )


def tail_bound_edgecount(g: Graph, m_rounds: int, r_prime: float, p: float) -> BoundReport:
    """Counts rounds in which every edge in the graph delivers.

    Such rounds advance every counter simultaneously, so the iteration
    count dominates a Binomial(M, (1-p)^|E|) and the exponent is
    D(R' || (1-p)^|E|); the argument needs R' below that success rate.
    """
    _check_bound_args(m_rounds, r_prime)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {p}")
    q_all = (1.0 - p) ** g.edge_count
    exponent = kl_bernoulli(r_prime, q_all)
    valid = r_prime < q_all
    return _finish(
        "edgecount", g, m_rounds, r_prime, p, None, exponent, valid, q_all
    )


def tail_bound_anytime(g: Graph, m_rounds: int, r_prime: float, beta: float) -> BoundReport:
    """Bound driven by an anytime code's delay exponent beta.

    Exponent (1-R') beta/2 - H(R') - log2(max_degree + 1) bits per
    round; well-defined at every rate, decaying only when positive.
    """
    _check_bound_args(m_rounds, r_prime)
    if beta <= 0.0:
        raise ValueError(f"delay exponent must be positive, got {beta}")
    exponent = (
        (1.0 - r_prime) * beta / 2.0 - entropy(r_prime) - math.log2(g.max_degree + 1)
    )
    return _finish(
        "anytime", g, m_rounds, r_prime, None, beta, exponent, True,
        guaranteed_rate_anytime(beta, g),
    )


def guaranteed_rate_degree(p: float, g: Graph) -> float:
    """Largest R' with a decaying degree bound; exactly 0 when none.

    The bound decays iff D(1-R' || p) > log2(max_degree + 1), which has
    solutions exactly when p < 1/(max_degree + 1).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {p}")
    delta = g.max_degree
    if p <= 0.0:
        return 1.0
    if p >= 1.0 / (1 + delta):
        return 0.0
    log_term = math.log2(1 + delta)

    def f(r: float) -> float:
        return kl_bernoulli(1.0 - r, p) - log_term

    return float(brentq(f, 0.0, 1.0 - p, xtol=1e-15, rtol=8.9e-16))


def guaranteed_rate_strict(p: float, g: Graph) -> float:
    """Rate threshold from the simpler sufficient condition
    (1-R') log2(1/p) > log2(max_degree + 1) + H(R'); never larger than
    guaranteed_rate_degree."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {p}")
    delta = g.max_degree
    if p <= 0.0:
        return 1.0
    if p >= 1.0 / (1 + delta):
        return 0.0
    log_p = math.log2(1.0 / p)
    log_term = math.log2(1 + delta)

    def f(r: float) -> float:
        return (1.0 - r) * log_p - entropy(r) - log_term

    return float(brentq(f, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16))


def guaranteed_rate_anytime(beta: float, g: Graph) -> float:
    """Largest R' with a decaying anytime bound; exactly 0 when none.

    Positive exactly when beta > 2 log2(max_degree + 1); the exponent
    is positive on an interval [0, R*) and R* is the returned root.
    """
    if beta <= 0.0:
        raise ValueError(f"delay exponent must be positive, got {beta}")
    delta = g.max_degree
    log_term = math.log2(1 + delta)
    if beta <= 2.0 * log_term:
        return 0.0

    def f(r: float) -> float:
        return (1.0 - r) * beta / 2.0 - entropy(r) - log_term

    return float(brentq(f, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16))


@dataclass(frozen=True)
class CodingGainReport:
    """Does coding beat the uncoded protocol on this graph?

    The uncoded mean-square error contracts per round by sqrt_lambda2;
    a coded protocol running at iteration rate R contracts by mu**R.
    Each rate route gets its own verdict (True when coding wins);
    disagreement flags routes that do not all agree.
    """

    n_nodes: int
    max_degree: int
    edge_count: int
    eps: float
    p: float
    mu: float
    sqrt_lambda2: float
    rate_degree: float
    rate_strict: float
    rate_edgecount: float
    gain_degree: bool
    gain_strict: bool
    gain_edgecount: bool
    disagreement: bool


def coding_gain_check(g: Graph, eps: float, p: float) -> CodingGainReport:
    """Compare coded vs uncoded convergence factors on one instance."""
    summary = spectral_summary(g, eps)
    ga = gamma_exact(g, eps, p, "symmetric")
    sq = uncoded_sym_rate(ga)
    r_deg = guaranteed_rate_degree(p, g)
    r_str = guaranteed_rate_strict(p, g)
    r_edge = (1.0 - p) ** g.edge_count

    def wins(rate: float) -> bool:
        return rate > 0.0 and summary.mu**rate < sq

    g_deg, g_str, g_edge = wins(r_deg), wins(r_str), wins(r_edge)
    return CodingGainReport(
        n_nodes=g.n_nodes,
        max_degree=g.max_degree,
        edge_count=g.edge_count,
        eps=eps,
        p=p,
        mu=summary.mu,
        sqrt_lambda2=sq,
        rate_degree=r_deg,
        rate_strict=r_str,
        rate_edgecount=r_edge,
        gain_degree=g_deg,
        gain_strict=g_str,
        gain_edgecount=g_edge,
        disagreement=not (g_deg == g_str == g_edge),
    )
