"""dG(r) time discretization on uniform slabs with a right Gauss-Radau basis.

Builds the local time matrices: the dG evolution matrix (time derivative plus
incoming-trace term), the temporal mass matrix, and the inter-slab transfer
matrix, together with a Gauss-Legendre quadrature used for right-hand-side
and error integrals in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P
from numpy.polynomial.legendre import leggauss


def radau_nodes(r: int) -> np.ndarray:
    """Nodes of the (r+1)-point right Gauss-Radau rule on (0,1], last = 1.

    On [-1,1] these are the roots of P_r(x) - P_{r+1}(x) (Radau IIA).
    """
    if r < 0:
        raise ValueError("degree must be >= 0")
    if r == 0:
        return np.array([1.0])
    c = np.zeros(r + 2)
    c[r] = 1.0
    c[r + 1] = -1.0
    roots = legendre.legroots(c)
    roots = np.sort(np.real(roots))
    if len(roots) != r + 1 or not np.all(np.isfinite(roots)):
        raise RuntimeError(f"Radau root-finding failed for degree {r}")
    nodes = 0.5 * (roots + 1.0)
    nodes[-1] = 1.0
    return nodes


@dataclass(frozen=True)
class SlabTimeBasis:
    """Nodal Lagrange basis on right Radau points of one reference slab.

    ``A_t`` holds the tau-independent dG evolution matrix, ``B_t`` the
    temporal mass matrix scaled by the slab length, and ``C_t`` the transfer
    matrix picking the previous slab's endpoint value.
    """

    r: int
    tau: float
    nodes: np.ndarray  # reference nodes in (0,1]
    A_t: np.ndarray
    B_t: np.ndarray
    C_t: np.ndarray
    quad_points: np.ndarray  # reference quadrature on [0,1]
    quad_weights: np.ndarray
    basis_at_quad: np.ndarray  # (nq, r+1)
    basis_at_zero: np.ndarray  # (r+1,) values v_i(0+)

    @property
    def n_nodes(self) -> int:
        return self.r + 1

    def eval_basis(self, s) -> np.ndarray:
        """All basis values at reference times s; shape (len(s), r+1)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.stack(
            [_lagrange_poly_eval(self.nodes, i, s) for i in range(self.r + 1)],
            axis=-1,
        )


def _lagrange_coeffs(nodes: np.ndarray, i: int) -> np.ndarray:
    """Monomial coefficients of Lagrange polynomial i on the given nodes."""
    c = np.array([1.0])
    for j, t in enumerate(nodes):
        if j == i:
            continue
        c = P.polymul(c, np.array([-t, 1.0])) / (nodes[i] - t)
    return c

def _lagrange_poly_eval(nodes: np.ndarray, i: int, s: np.ndarray) -> np.ndarray:
    return P.polyval(s, _lagrange_coeffs(nodes, i))


def build_basis(r: int, tau: float) -> SlabTimeBasis:
    """Time matrices on a slab of length tau with the right Radau nodal basis."""
    if tau <= 0:
        raise ValueError("slab length must be positive")
    nodes = radau_nodes(r)
    n = r + 1
    coeffs = [_lagrange_coeffs(nodes, i) for i in range(n)]
    dcoeffs = [P.polyder(c) for c in coeffs]

    # exact Gauss-Legendre for polynomial products of degree <= 2r
    s, w = leggauss(max(r + 1, 1))
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    V = np.stack([P.polyval(s, c) for c in coeffs], axis=-1)  # (nq, n)
    dV = np.stack([P.polyval(s, c) for c in dcoeffs], axis=-1)
    v0 = np.array([P.polyval(0.0, c) for c in coeffs])
    v1 = np.array([P.polyval(1.0, c) for c in coeffs])

    # A_t[i,j] = int v'_j v_i ds + v_j(0+) v_i(0+): independent of tau
    A_t = np.einsum("q,qj,qi->ij", w, dV, V) + np.outer(v0, v0)
    B_t = tau * np.einsum("q,qj,qi->ij", w, V, V)
    # C_t[i,j] = v_j(prev endpoint) * v_i(0+); Lagrange basis: v_j(1) = delta_{jr}
    C_t = np.outer(v0, v1)

    # quadrature for rhs/error integrals: r+2 Gauss points
    sq, wq = leggauss(r + 2)
    sq = 0.5 * (sq + 1.0)
    wq = 0.5 * wq
    Vq = np.stack([P.polyval(sq, c) for c in coeffs], axis=-1)
    return SlabTimeBasis(
        r=r,
        tau=tau,
        nodes=nodes,
        A_t=A_t,
        B_t=B_t,
        C_t=C_t,
        quad_points=sq,
        quad_weights=wq,
        basis_at_quad=Vq,
        basis_at_zero=v0,
    )
