"""Laplacian spectra and noiseless consensus contraction factors.

The linear iteration x(k+1) = (I - eps*L) x(k) preserves the average of x
and contracts the disagreement toward that average whenever
0 < eps < 2 / lambda_max(L) and the graph is connected.  The per-step
contraction factor is

    mu = max(1 - eps*lambda_2, eps*lambda_max - 1)

where lambda_2 is the smallest nonzero Laplacian eigenvalue (the algebraic
connectivity) and lambda_max the largest.  Eigenvalues are computed with a
self-contained cyclic Jacobi sweep so the package's headline numbers do
not silently depend on a LAPACK build; tests cross-check against numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraph, InternalConsistencyError, InvalidEps
from .graphs import Graph

# Below this, the algebraic connectivity of a float Laplacian is treated
# as zero (disconnected); BFS connectivity remains authoritative.
CONNECTIVITY_TOL = 1e-9

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100


def laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian L = D - A as a dense float array."""
    n = g.n_nodes
    lap = np.zeros((n, n), dtype=float)
    for i, j in g.edges:
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    return lap


def sym_eigenvalues(a: np.ndarray, tol: float = _JACOBI_TOL) -> tuple[float, ...]:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Runs full sweeps until the off-diagonal Frobenius norm drops below
    ``tol`` (absolute).  Quadratic convergence makes a few sweeps enough
    at the sizes this package targets.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    if n == 1:
        return (float(a[0, 0]),)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = math.sqrt(2.0 * float(np.sum(np.tril(a, -1) ** 2)))
        if off < tol:
            return tuple(float(x) for x in np.sort(np.diag(a)))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                others = np.r_[0:p, p + 1:q, q + 1:n]
                akp = a[others, p].copy()
                akq = a[others, q].copy()
                a[others, p] = a[p, others] = c * akp - s * akq
                a[others, q] = a[q, others] = s * akp + c * akq
                a[p, p] -= t * apq
                a[q, q] += t * apq
                a[p, q] = a[q, p] = 0.0
    raise RuntimeError(f"jacobi sweep cap hit ({_JACOBI_MAX_SWEEPS}); matrix too large?")


def laplacian_eigenvalues(g: Graph) -> tuple[float, ...]:
    """Ascending Laplacian eigenvalues; the first is always (numerically) 0."""
    return sym_eigenvalues(laplacian(g))


@dataclass(frozen=True)
class SpectralSummary:
    """Noiseless consensus rates for one graph and step size."""

    eigenvalues: tuple[float, ...]
    lambda_max: float
    fiedler: float
    eps: float
    eps_star: float
    mu: float


def eps_star(g: Graph) -> float:
    """Step size minimizing mu: 2 / (lambda_max + lambda_2)."""
    return spectral_summary(g, None).eps_star


def spectral_summary(g: Graph, eps: float | None = None) -> SpectralSummary:
    """Contraction summary; eps=None selects the optimal step size.

    Raises DisconnectedGraph when BFS finds multiple components, and
    InternalConsistencyError if the spectral connectivity test (algebraic
    connectivity above/below CONNECTIVITY_TOL) disagrees with BFS.
    """
    if g.n_nodes < 2:
        raise ValueError("spectral summary needs at least two nodes")
    eigs = laplacian_eigenvalues(g)
    fiedler = eigs[1]
    lam_max = eigs[-1]
    bfs_connected = g.is_connected
    spectral_connected = fiedler > CONNECTIVITY_TOL
    if bfs_connected != spectral_connected:
        raise InternalConsistencyError(
            f"BFS connectivity ({bfs_connected}) disagrees with algebraic "
            f"connectivity {fiedler:.3e} at tol {CONNECTIVITY_TOL:g}"
        )
    if not bfs_connected:
        raise DisconnectedGraph("consensus rate is undefined on a disconnected graph")
    star = 2.0 / (lam_max + fiedler)
    if eps is None:
        eps = star
    if not 0.0 < eps < 2.0 / lam_max:
        raise InvalidEps(
            f"eps={eps} outside the contracting range (0, {2.0 / lam_max:.6g})"
        )
    mu = max(1.0 - eps * fiedler, eps * lam_max - 1.0)
    assert 0.0 <= mu < 1.0, f"contraction factor out of range: {mu}"
    return SpectralSummary(
        eigenvalues=eigs,
        lambda_max=lam_max,
        fiedler=fiedler,
        eps=float(eps),
        eps_star=star,
        mu=mu,
    )


def consensus_matrix(g: Graph, eps: float) -> np.ndarray:
    """W = I - eps*L.  eps=0 (the identity map) is allowed here.

    Validation is one-sided on purpose: analysis code sometimes needs the
    frozen (eps=0) matrix, which spectral_summary rejects because its mu
    would be 1.
    """
    lam_max = laplacian_eigenvalues(g)[-1]
    if g.edge_count > 0 and not 0.0 <= eps < 2.0 / lam_max:
        raise InvalidEps(
            f"eps={eps} outside [0, {2.0 / lam_max:.6g}) for consensus matrix"
        )
    return np.eye(g.n_nodes) - eps * laplacian(g)
