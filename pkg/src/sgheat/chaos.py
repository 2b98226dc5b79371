"""Probabilists' Hermite polynomial chaos for i.i.d. standard Gaussian inputs.

Univariate/multivariate orthonormal bases, total-degree multi-index sets,
Gauss-Hermite quadrature for the standard normal probability measure,
stochastic projection, and sparse triple-product coupling tensors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e
from scipy.sparse import csr_matrix
from scipy.special import comb

MultiIndex = tuple[int, ...]


def total_degree(alpha: MultiIndex) -> int:
    return sum(alpha)


def hermite_eval(n: int, y: float) -> float:
    """Normalized probabilists' Hermite polynomial psi_n(y) = He_n(y)/sqrt(n!).

    Uses the three-term recurrence He_{n+1} = y He_n - n He_{n-1}; the
    normalization is applied once at the end.
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    h_prev, h = 1.0, y
    if n == 0:
        return 1.0
    for k in range(1, n):
        h_prev, h = h, y * h - k * h_prev
    return h / math.sqrt(math.factorial(n))


def hermite_eval_vec(n: int, y: np.ndarray) -> np.ndarray:
    """Vectorized psi_n over an array of evaluation points."""
    y = np.asarray(y, dtype=float)
    if n == 0:
        return np.ones_like(y)
    h_prev, h = np.ones_like(y), y.copy()
    for k in range(1, n):
        h_prev, h = h, y * h - k * h_prev
    return h / math.sqrt(math.factorial(n))


@dataclass(frozen=True)
class ChaosBasis:
    """Total-degree Hermite chaos basis in M i.i.d. standard Gaussians.

    Multi-indices are ordered graded-lexicographically: non-decreasing total
    degree, lexicographic within each grade. The first index is always zero.
    """

    M: int
    p: int
    indices: tuple[MultiIndex, ...]
    id_of: dict[MultiIndex, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def eval(self, alpha: MultiIndex, xi) -> float:
        """Tensorized evaluation Psi_alpha(xi) = prod_m psi_{alpha_m}(xi_m)."""
        if alpha not in self.id_of:
            raise KeyError(f"index not in basis: {alpha}")
        out = 1.0
        for a, y in zip(alpha, xi):
            out *= hermite_eval(a, y)
        return out


def enumerate_basis(M: int, p: int) -> ChaosBasis:
    """All multi-indices with |alpha|_1 <= p in graded lexicographic order."""
    if M < 1 or p < 0:
        raise ValueError("need M >= 1 and p >= 0")
    indices: list[MultiIndex] = []
    for grade in range(p + 1):
        grade_block = [
            alpha
            for alpha in itertools.product(range(grade + 1), repeat=M)
            if sum(alpha) == grade
        ]
        grade_block.sort()
        indices.extend(grade_block)
    assert len(indices) == comb(M + p, p, exact=True)
    id_of = {alpha: i for i, alpha in enumerate(indices)}
    return ChaosBasis(M=M, p=p, indices=tuple(indices), id_of=id_of)


def multivariate_eval(basis: ChaosBasis, alpha: MultiIndex, xi) -> float:
    return basis.eval(alpha, xi)


def expectation(basis: ChaosBasis, alpha: MultiIndex) -> float:
    """E[Psi_alpha] under the Gaussian measure: 1 for the zero index, else 0."""
    if alpha not in basis.id_of:
        raise KeyError(f"index not in basis: {alpha}")
    return 1.0 if total_degree(alpha) == 0 else 0.0


@dataclass(frozen=True)
class GaussHermiteRule:
    """Gauss-Hermite rule for the standard normal probability measure.

    Nodes are the roots of He_Q; weights are normalized to sum to one, so the
    rule integrates polynomials of degree <= 2Q-1 against the N(0,1) density.
    """

    Q: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, g) -> float:
        return float(np.dot(self.weights, [g(x) for x in self.nodes]))


def gauss_hermite(Q: int) -> GaussHermiteRule:
    if Q < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = hermite_e.hermegauss(Q)
    weights = weights / weights.sum()
    return GaussHermiteRule(Q=Q, nodes=nodes, weights=weights)


def project(g, basis: ChaosBasis, rule: GaussHermiteRule) -> np.ndarray:
    """Chaos coefficients g_beta = E[g Psi_beta] by tensorized quadrature."""
    M = basis.M
    grids = np.meshgrid(*([rule.nodes] * M), indexing="ij")
    pts = np.stack([grid.ravel() for grid in grids], axis=-1)
    wgrids = np.meshgrid(*([rule.weights] * M), indexing="ij")
    w = np.prod(np.stack([grid.ravel() for grid in wgrids], axis=-1), axis=-1)
    gvals = np.array([g(pt) for pt in pts])
    coeffs = np.empty(len(basis))
    # psi tables per dimension, degree 0..p
    psi = np.stack(
        [np.stack([hermite_eval_vec(n, pts[:, m]) for n in range(basis.p + 1)])
         for m in range(M)]
    )  # shape (M, p+1, n_pts)
    for j, alpha in enumerate(basis.indices):
        basis_vals = np.ones(len(pts))
        for m, a in enumerate(alpha):
            basis_vals *= psi[m, a]
        coeffs[j] = np.dot(w, gvals * basis_vals)
    return coeffs


@lru_cache(maxsize=None)
def univariate_triple(mu: int, a: int, b: int) -> float:
    """E[psi_mu psi_a psi_b] for one standard Gaussian variable.

    Quadrature of order ceil((mu+a+b)/2)+1 is exact for the integrand.
    Returns exact zero when the parity or triangle condition fails.
    """
    s = mu + a + b
    if s % 2 == 1 or abs(a - b) > mu or a + b < mu:
        return 0.0
    rule = gauss_hermite(s // 2 + 1)
    vals = (
        hermite_eval_vec(mu, rule.nodes)
        * hermite_eval_vec(a, rule.nodes)
        * hermite_eval_vec(b, rule.nodes)
    )
    return float(np.dot(rule.weights, vals))


def triple_value(mu: MultiIndex, alpha: MultiIndex, beta: MultiIndex) -> float:
    """[G_mu]_{alpha beta} as a product of univariate triple expectations."""
    out = 1.0
    for m, a, b in zip(mu, alpha, beta):
        f = univariate_triple(m, a, b)
        if f == 0.0:
            return 0.0
        out *= f
    return out


@dataclass(frozen=True)
class TripleProductTensor:
    """Sparse stochastic coupling [G_mu]_{alpha beta} on a retained basis.

    ``entries`` lists every nonzero (alpha-position, beta-position, value),
    including both orientations of each symmetric off-diagonal pair.
    """

    mu: MultiIndex
    n_modes: int
    entries: tuple[tuple[int, int, float], ...]

    def to_csr(self) -> csr_matrix:
        if not self.entries:
            return csr_matrix((self.n_modes, self.n_modes))
        rows, cols, vals = zip(*self.entries)
        return csr_matrix((vals, (rows, cols)), shape=(self.n_modes, self.n_modes))

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n_modes)
        for i, j, v in self.entries:
            if i == j:
                d[i] = v
        return d


def triple_products(basis: ChaosBasis, mu: MultiIndex) -> TripleProductTensor:
    """Sparse tensor of all nonzero [G_mu]_{alpha beta} over the basis."""
    if len(mu) != basis.M:
        raise ValueError("coefficient mode has wrong stochastic dimension")
    entries: list[tuple[int, int, float]] = []
    n = len(basis)
    for i in range(n):
        alpha = basis.indices[i]
        for j in range(i, n):
            beta = basis.indices[j]
            v = triple_value(mu, alpha, beta)
            if v != 0.0:
                entries.append((i, j, v))
                if i != j:
                    entries.append((j, i, v))
    return TripleProductTensor(mu=mu, n_modes=n, entries=tuple(entries))
