"""Finite-chaos manufactured benchmark for the random heat equation.

Diffusion field d_min + (sum_i xi_i g_i(x))^2 with its exact Hermite
expansion, the separated exact solution phi(x,t) * G_q(xi), the analytic
truncation-error formula, and all error/rate quantities of the study tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .chaos import ChaosBasis, MultiIndex, enumerate_basis, hermite_eval_vec
from .spatial_fem import FeSpace
from .time_slab import SlabTimeBasis

SQRT2 = math.sqrt(2.0)

# closed-form space-time norms of the deterministic factor phi = t^4 S(x):
# int_0^1 t^8 dt = 1/9, |S|_{L2(D)}^2 = 1, |grad S|_{L2(D)}^2 = pi^2/2
PHI_L2_SQ = 1.0 / 9.0
PHI_H1_SQ = math.pi**2 / 18.0


@dataclass(frozen=True)
class Poly2:
    """Bivariate polynomial as a list of (coefficient, x-power, y-power)."""

    terms: tuple[tuple[float, int, int], ...]

    def __call__(self, x, y):
        out = 0.0
        for c, px, py in self.terms:
            out = out + c * np.power(x, px) * np.power(y, py)
        return out

    def grad(self, x, y):
        gx = 0.0
        gy = 0.0
        for c, px, py in self.terms:
            if px > 0:
                gx = gx + c * px * np.power(x, px - 1) * np.power(y, py)
            if py > 0:
                gy = gy + c * py * np.power(x, px) * np.power(y, py - 1)
        return gx, gy

    def __mul__(self, other: "Poly2") -> "Poly2":
        terms = {}
        for c1, p1, q1 in self.terms:
            for c2, p2, q2 in other.terms:
                key = (p1 + p2, q1 + q2)
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Poly2(tuple((c, p, q) for (p, q), c in terms.items() if c != 0.0))

    def scaled(self, s: float) -> "Poly2":
        return Poly2(tuple((s * c, p, q) for c, p, q in self.terms))


@dataclass(frozen=True)
class DiffusionField:
    """Hermite expansion of a(x, xi) = d_min + (sum_i xi_i g_i(x))^2."""

    d_min: float
    factors: tuple[Poly2, ...]  # the spatial factors g_i
    modes: dict[MultiIndex, Poly2]

    @property
    def M(self) -> int:
        return len(self.factors)

    @property
    def active_set(self) -> tuple[MultiIndex, ...]:
        return tuple(self.modes.keys())

    def sample(self, xi):
        """Pointwise coefficient a(., xi) as a callable of (x, y)."""
        xi = np.asarray(xi, dtype=float)

        def a(x, y):
            lin = 0.0
            for coef, g in zip(xi, self.factors):
                lin = lin + coef * g(x, y)
            return self.d_min + lin**2

        return a


def _unit(M: int, i: int, j: int | None = None) -> MultiIndex:
    alpha = [0] * M
    alpha[i] += 1
    if j is None:
        alpha[i] += 1
    else:
        alpha[j] += 1
    return tuple(alpha)


def expand_diffusion(
    d_min: float, factors: tuple[Poly2, ...] | None = None
) -> DiffusionField:
    """Exact chaos modes of the squared-linear diffusion coefficient.

    With L = sum_i xi_i g_i: the zero mode is d_min + sum_i g_i^2, the modes
    2e_i carry sqrt(2) g_i^2, and the modes e_i + e_j carry 2 g_i g_j.
    """
    if d_min <= 0:
        raise ValueError("d_min must be positive")
    if factors is None:
        factors = default_factors()
    M = len(factors)
    modes: dict[MultiIndex, Poly2] = {}
    zero_terms = {(0, 0): d_min}
    for g in factors:
        for c, p, q in (g * g).terms:
            zero_terms[(p, q)] = zero_terms.get((p, q), 0.0) + c
    modes[(0,) * M] = Poly2(tuple((c, p, q) for (p, q), c in zero_terms.items()))
    for i, g in enumerate(factors):
        modes[_unit(M, i)] = (g * g).scaled(SQRT2)
    for i in range(M):
        for j in range(i + 1, M):
            modes[_unit(M, i, j)] = (factors[i] * factors[j]).scaled(2.0)
    return DiffusionField(d_min=d_min, factors=factors, modes=modes)


def default_factors() -> tuple[Poly2, ...]:
    """The four spatial factors (x1^2, x1 x2, x2^2, 1) of the M=4 benchmark."""
    return (
        Poly2(((1.0, 2, 0),)),
        Poly2(((1.0, 1, 1),)),
        Poly2(((1.0, 0, 2),)),
        Poly2(((1.0, 0, 0),)),
    )


def toy_factors() -> tuple[Poly2, ...]:
    """Two-dimensional reduction (x1 x2 / 2, 1/2) with the same squared
    structure; the 1/2 scale keeps the truncated-system coupling error well
    below the stochastic truncation level on coarse grids."""
    return (Poly2(((0.5, 1, 1),)), Poly2(((0.5, 0, 0),)))


@dataclass(frozen=True)
class ManufacturedBenchmark:
    """Separated exact solution phi(x,t) G_q(xi) with finite Hermite factor."""

    q: int
    eta: float
    diffusion: DiffusionField
    T: float
    basis_q: ChaosBasis = field(repr=False)
    coeffs: np.ndarray = field(repr=False)  # c_alpha over basis_q

    @property
    def M(self) -> int:
        return self.diffusion.M

    # -- deterministic factor phi = t^4 sin(pi/2 (x+1)) sin(pi/2 (y+1)) -----

    @staticmethod
    def space_factor(x, y):
        return np.sin(0.5 * np.pi * (x + 1.0)) * np.sin(0.5 * np.pi * (y + 1.0))

    @staticmethod
    def space_factor_grad(x, y):
        c = 0.5 * np.pi
        sx, cx = np.sin(c * (x + 1.0)), np.cos(c * (x + 1.0))
        sy, cy = np.sin(c * (y + 1.0)), np.cos(c * (y + 1.0))
        return c * cx * sy, c * sx * cy

    @staticmethod
    def space_factor_laplacian(x, y):
        s = ManufacturedBenchmark.space_factor(x, y)
        return -0.5 * np.pi**2 * s

    def phi(self, x, y, t):
        return t**4 * self.space_factor(x, y)

    def phi_dt(self, x, y, t):
        return 4.0 * t**3 * self.space_factor(x, y)

    def phi_grad(self, x, y, t):
        gx, gy = self.space_factor_grad(x, y)
        return t**4 * gx, t**4 * gy

    # -- stochastic factor --------------------------------------------------

    def stochastic_factor(self, xi) -> float:
        """G_q(xi) = sum_alpha c_alpha Psi_alpha(xi)."""
        xi = np.asarray(xi, dtype=float)
        psi = np.stack(
            [
                np.array([hermite_eval_vec(n, xi[m : m + 1])[0] for n in range(self.q + 1)])
                for m in range(self.M)
            ]
        )
        out = 0.0
        for c, alpha in zip(self.coeffs, self.basis_q.indices):
            term = c
            for m, a in enumerate(alpha):
                term *= psi[m, a]
            out += term
        return float(out)

    def exact(self, x, y, t, xi):
        return self.phi(x, y, t) * self.stochastic_factor(xi)

    def sampled_forcing(self, xi):
        """Pathwise forcing f(., ., xi) = (phi_t - div(a grad phi)) G_q(xi)."""
        g = self.stochastic_factor(xi)
        a = self.diffusion.sample(xi)
        xi = np.asarray(xi, dtype=float)

        def f(x, y, t):
            lin = 0.0
            lin_gx = 0.0
            lin_gy = 0.0
            for coef, gi in zip(xi, self.diffusion.factors):
                lin = lin + coef * gi(x, y)
                dgx, dgy = gi.grad(x, y)
                lin_gx = lin_gx + coef * dgx
                lin_gy = lin_gy + coef * dgy
            aval = self.diffusion.d_min + lin**2
            agx, agy = 2.0 * lin * lin_gx, 2.0 * lin * lin_gy
            sgx, sgy = self.space_factor_grad(x, y)
            lap = self.space_factor_laplacian(x, y)
            s = self.space_factor(x, y)
            diff = agx * t**4 * sgx + agy * t**4 * sgy + aval * t**4 * lap
            return (4.0 * t**3 * s - diff) * g

        return f

    def variance_coefficient(self) -> float:
        """sum_{alpha != 0} c_alpha^2, the stochastic variance of G_q."""
        return float(np.sum(self.coeffs[1:] ** 2))


def make_benchmark(
    M: int = 4,
    q: int = 6,
    eta: float = 0.35,
    d_min: float = 0.2,
    T: float = 1.0,
    factors: tuple[Poly2, ...] | None = None,
) -> ManufacturedBenchmark:
    if factors is None:
        factors = default_factors() if M == 4 else None
    if factors is None:
        if M == 2:
            factors = toy_factors()
        else:
            raise ValueError("provide spatial factors for M not in (2, 4)")
    if len(factors) != M:
        raise ValueError("number of spatial factors must equal M")
    basis_q = enumerate_basis(M, q)
    coeffs = np.array(
        [1.0 if sum(a) == 0 else eta ** sum(a) for a in basis_q.indices]
    )
    diffusion = expand_diffusion(d_min, factors)
    return ManufacturedBenchmark(
        q=q, eta=eta, diffusion=diffusion, T=T, basis_q=basis_q, coeffs=coeffs
    )


def toy_benchmark(eta: float = 0.35, d_min: float = 0.2) -> ManufacturedBenchmark:
    """Scaled-down M=2, q=2 variant for fast runs; same structure as M=4."""
    return make_benchmark(M=2, q=2, eta=eta, d_min=d_min)


def truncation_error(bench: ManufacturedBenchmark, p: int) -> float:
    """Pure stochastic truncation error |phi| * sqrt(sum_{|a|>p} c_a^2)."""
    if p < 0:
        raise ValueError("retained degree must be >= 0")
    if p >= bench.q:
        return 0.0
    M = bench.M
    tail = sum(
        comb(k + M - 1, M - 1, exact=True) * bench.eta ** (2 * k)
        for k in range(p + 1, bench.q + 1)
    )
    return math.sqrt(PHI_L2_SQ) * math.sqrt(tail)


@dataclass
class ErrorReport:
    """Error, rate, and size quantities for one stochastic-refinement row."""

    p_xi: int
    n_xi: int
    full_l2: float
    full_h1: float
    mean_l2: float
    mean_h1: float
    var_l2: float
    var_h1: float
    n_sg_slab: int = 0
    work: int = 0


def evaluate_errors(
    trajectory: list[np.ndarray],
    bench: ManufacturedBenchmark,
    basis: ChaosBasis,
    space: FeSpace,
    timebasis: SlabTimeBasis,
) -> ErrorReport:
    """All error quantities of one SG run against the manufactured solution.

    ``trajectory[n]`` holds the slab unknowns with shape (N_xi, r+1, N_h).
    Retained-mode errors are modal sums at space-time quadrature points; the
    omitted exact modes contribute the analytic stochastic tail.
    """
    n_xi = len(basis)
    tau = timebasis.tau
    wq_t = timebasis.quad_weights
    Vq = timebasis.basis_at_quad  # (nq_t, r+1)

    # exact coefficients c_alpha for retained modes (0 outside Lambda_q)
    c_ret = np.array(
        [
            bench.coeffs[bench.basis_q.id_of[a]] if a in bench.basis_q.id_of else 0.0
            for a in basis.indices
        ]
    )
    # total exact variance coefficient, including omitted modes
    var_coeff_exact = bench.variance_coefficient()
    tail_sq = sum(
        float(bench.coeffs[bench.basis_q.id_of[a]]) ** 2
        for a in bench.basis_q.indices
        if a not in basis.id_of
    )

    pts = space.quad_points
    wx = space.quad_weights
    x, y = pts[..., 0], pts[..., 1]
    S = bench.space_factor(x, y)
    Sgx, Sgy = bench.space_factor_grad(x, y)

    modal_l2_sq = np.zeros(n_xi)
    modal_h1_sq = np.zeros(n_xi)
    var_l2_sq = 0.0
    var_h1_sq = 0.0

    for n, U in enumerate(trajectory):
        t0 = n * tau
        U_full = space.to_full(U)  # (N_xi, r+1, N_full)
        # mode coefficients at the time quadrature points of this slab
        U_q = np.einsum("aim,qi->aqm", U_full, Vq)  # (N_xi, nq_t, N_full)
        vals = space.eval_at_quad(U_q)  # (N_xi, nq_t, n_cells, nq_x)
        grads = space.grad_at_quad(U_q)
        tq = t0 + tau * timebasis.quad_points
        phi_t = tq**4  # (nq_t,)

        exact_vals = c_ret[:, None, None, None] * phi_t[None, :, None, None] * S
        dv = vals - exact_vals
        modal_l2_sq += tau * np.einsum("q,aqcp,cp->a", wq_t, dv**2, wx)
        ex_gx = c_ret[:, None, None, None] * phi_t[None, :, None, None] * Sgx
        ex_gy = c_ret[:, None, None, None] * phi_t[None, :, None, None] * Sgy
        dgx = grads[..., 0] - ex_gx
        dgy = grads[..., 1] - ex_gy
        modal_h1_sq += tau * np.einsum(
            "q,aqcp,cp->a", wq_t, dgx**2 + dgy**2, wx
        )

        # variance fields from nonzero modes
        v_h = np.einsum("aqcp,aqcp->qcp", vals[1:], vals[1:])
        v_ex = var_coeff_exact * (phi_t[:, None, None] * S) ** 2
        var_l2_sq += tau * np.einsum("q,qcp,cp->", wq_t, (v_h - v_ex) ** 2, wx)
        gv_hx = 2.0 * np.einsum("aqcp,aqcp->qcp", vals[1:], grads[1:, ..., 0])
        gv_hy = 2.0 * np.einsum("aqcp,aqcp->qcp", vals[1:], grads[1:, ..., 1])
        phi_sq = phi_t[:, None, None] ** 2
        gv_exx = var_coeff_exact * 2.0 * phi_sq * S * Sgx
        gv_exy = var_coeff_exact * 2.0 * phi_sq * S * Sgy
        var_h1_sq += tau * np.einsum(
            "q,qcp,cp->", wq_t, (gv_hx - gv_exx) ** 2 + (gv_hy - gv_exy) ** 2, wx
        )

    full_l2 = math.sqrt(float(np.sum(modal_l2_sq)) + tail_sq * PHI_L2_SQ)
    full_h1 = math.sqrt(float(np.sum(modal_h1_sq)) + tail_sq * PHI_H1_SQ)
    return ErrorReport(
        p_xi=basis.p,
        n_xi=n_xi,
        full_l2=full_l2,
        full_h1=full_h1,
        mean_l2=math.sqrt(float(modal_l2_sq[0])),
        mean_h1=math.sqrt(float(modal_h1_sq[0])),
        var_l2=math.sqrt(float(var_l2_sq)),
        var_h1=math.sqrt(float(var_h1_sq)),
        n_sg_slab=n_xi * timebasis.n_nodes * space.n_dofs,
    )


def rates(
    errors: list[float], n_xi: list[int]
) -> tuple[list[float | None], list[float | None]]:
    """Degree rates r_p and dimension-growth rates r_xi for an error sequence.

    The first entry of each sequence is None; non-positive errors yield None
    (undefined marker).
    """
    r_p: list[float | None] = [None]
    r_xi: list[float | None] = [None]
    for i in range(1, len(errors)):
        if errors[i - 1] <= 0 or errors[i] <= 0:
            r_p.append(None)
            r_xi.append(None)
            continue
        ratio = math.log(errors[i - 1] / errors[i])
        r_p.append(ratio)
        r_xi.append(ratio / math.log(n_xi[i] / n_xi[i - 1]))
    return r_p, r_xi
