"""Pathwise Monte-Carlo pipeline for the random heat equation benchmark.

Reproducible counter-based sampling, per-sample deterministic slab solves
with the sampled coefficient, streaming moment estimators on the space-time
quadrature grid for both the discrete and the exact sampled fields, and the
three-way total / discretization / pure-sampling error decomposition.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import sg_system, spatial_fem
from .benchmark import ManufacturedBenchmark
from .krylov import FgmresConfig, build_block_jacobi, fgmres
from .sg_system import ForcingMode
from .spatial_fem import FeSpace
from .time_slab import SlabTimeBasis


@dataclass
class SampleStream:
    """Counter-based Gaussian sample stream: sample m depends only on
    (seed, m), so draws are reproducible and order-independent."""

    seed: int
    M: int

    def draw(self, m: int) -> np.ndarray:
        if m < 1:
            raise ValueError("sample index must be >= 1")
        ss = np.random.SeedSequence(self.seed, spawn_key=(m,))
        return np.random.default_rng(ss).standard_normal(self.M)


def draw_sample(stream: SampleStream, m: int) -> np.ndarray:
    return stream.draw(m)


class MomentAccumulator:
    """Streaming mean/variance of a sampled field and its gradient.

    The value moments use Welford's update (running mean and sum of squared
    deviations); gradients additionally accumulate sums of grad u and of
    u * grad u, which suffice for the variance field's gradient.
    """

    def __init__(self, shape: tuple[int, ...]):
        self.count = 0
        self._mean = np.zeros(shape)
        self._m2 = np.zeros(shape)
        self._sum_grad = np.zeros(shape + (2,))
        self._sum_ugrad = np.zeros(shape + (2,))

    def add(self, u: np.ndarray, grad_u: np.ndarray) -> None:
        self.count += 1
        delta = u - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (u - self._mean)
        self._sum_grad += grad_u
        self._sum_ugrad += u[..., None] * grad_u

    def mean(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("no samples accumulated")
        return self._mean

    def mean_grad(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("no samples accumulated")
        return self._sum_grad / self.count

    def variance(self) -> np.ndarray:
        """Unbiased (1/(N-1)) variance field; undefined for N < 2."""
        if self.count < 2:
            raise ValueError("variance needs at least two samples")
        return self._m2 / (self.count - 1)

    def variance_grad(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("variance needs at least two samples")
        n = self.count
        m = self._mean[..., None]
        return 2.0 * (self._sum_ugrad - n * m * (self._sum_grad / n)) / (n - 1)


@dataclass
class MCErrorReport:
    """Error decomposition of one milestone of the cumulative sample stream.

    ``None`` marks quantities whose estimator is undefined at this milestone
    (variance at N=1) or skipped (discrete quantities in sampling-only runs).
    """

    n_samples: int
    tot_mean_l2: float | None
    tot_var_l2: float | None
    disc_mean_l2: float | None
    disc_mean_h1: float | None
    disc_var_l2: float | None
    disc_var_h1: float | None
    mc_mean_l2: float
    mc_var_l2: float | None
    rate_tot_mean: float | None = None
    rate_mc_mean: float | None = None
    rate_tot_var: float | None = None
    rate_mc_var: float | None = None
    wall_s: float = 0.0


def window_rate(e_ref: float, e: float, n_ref: int, n: int) -> float:
    """Observed decay rate log(E_ref/E) / log(N/N_ref) over a window."""
    if e_ref <= 0 or e <= 0:
        raise ValueError("errors must be positive")
    if n <= n_ref or n_ref <= 0:
        raise ValueError("need N > N_ref > 0")
    return math.log(e_ref / e) / math.log(n / n_ref)


def _sampled_spatial_part(bench: ManufacturedBenchmark, xi: np.ndarray):
    """P(x) = grad a . grad S + a lap S for the sampled coefficient."""

    def P(x, y):
        lin = 0.0
        lin_gx = 0.0
        lin_gy = 0.0
        for coef, gi in zip(xi, bench.diffusion.factors):
            lin = lin + coef * gi(x, y)
            dgx, dgy = gi.grad(x, y)
            lin_gx = lin_gx + coef * dgx
            lin_gy = lin_gy + coef * dgy
        aval = bench.diffusion.d_min + lin**2
        sgx, sgy = ManufacturedBenchmark.space_factor_grad(x, y)
        lap = ManufacturedBenchmark.space_factor_laplacian(x, y)
        return 2.0 * lin * (lin_gx * sgx + lin_gy * sgy) + aval * lap

    return P


def pathwise_solve(
    xi,
    space: FeSpace,
    timebasis: SlabTimeBasis,
    bench: ManufacturedBenchmark,
    n_slabs: int,
    config: FgmresConfig = FgmresConfig(),
    sample_index: int | None = None,
) -> list[np.ndarray]:
    """Deterministic slab march (A_t x M_x + B_t x K(xi)) U = F + transfer.

    Returns per-slab arrays of shape (r+1, N_h).  Reuses the SG machinery
    with a single stochastic mode whose coefficient is the sampled field.
    """
    xi = np.asarray(xi, dtype=float)
    try:
        M_x = spatial_fem.assemble_mass(space)
        K = spatial_fem.assemble_weighted_stiffness(space, bench.diffusion.sample(xi))
        prec = build_block_jacobi(
            timebasis.A_t, timebasis.B_t, M_x, [K], np.ones((1, 1))
        )
        g = bench.stochastic_factor(xi)
        P = _sampled_spatial_part(bench, xi)
        mode = ForcingMode(
            c_beta=g, spatial_part=lambda x, y, P=P, g=g: g * P(x, y)
        )
        cache = sg_system._forcing_load_vectors(space, [mode])
        nt, nh = timebasis.n_nodes, space.n_dofs
        shape = (1, nt, nh)

        def op_flat(v):
            u = v.reshape(shape)
            flat = u.reshape(-1, nh)
            Mu = (M_x @ flat.T).T.reshape(shape)
            Ku = (K @ flat.T).T.reshape(shape)
            y = np.einsum("ij,ajm->aim", timebasis.A_t, Mu)
            y += np.einsum("ij,ajm->aim", timebasis.B_t, Ku)
            return y.ravel()

        trajectory = []
        u_prev = None
        for n in range(n_slabs):
            rhs = sg_system.assemble_load(space, timebasis, [mode], n, _cache=cache)
            if u_prev is not None:
                Mu = (M_x @ u_prev.T).T
                rhs += np.einsum("ij,jm->im", timebasis.C_t, Mu)[None]
            x, _, _ = fgmres(op_flat, prec.apply, rhs.ravel(), config)
            u_prev = x.reshape(nt, nh)
            trajectory.append(u_prev)
        return trajectory
    except Exception as exc:
        tag = f" (sample {sample_index})" if sample_index is not None else ""
        raise RuntimeError(f"pathwise solve failed{tag}: {exc}") from exc


@dataclass(frozen=True)
class _Grid:
    """Space-time quadrature grid shared by all accumulated fields."""

    weights: np.ndarray  # (n_slabs, nq_t, n_cells, nq_x)
    phi: np.ndarray  # deterministic factor values, same shape
    phi_grad: np.ndarray  # (..., 2)
    shape: tuple[int, ...]


def _build_grid(
    space: FeSpace, timebasis: SlabTimeBasis, bench: ManufacturedBenchmark, n_slabs: int
) -> _Grid:
    tau = timebasis.tau
    pts = space.quad_points
    x, y = pts[..., 0], pts[..., 1]
    S = bench.space_factor(x, y)  # (n_cells, nq_x)
    Sgx, Sgy = bench.space_factor_grad(x, y)
    tq = (
        np.arange(n_slabs)[:, None] * tau + tau * timebasis.quad_points[None, :]
    )  # (n_slabs, nq_t)
    phi_t = tq**4
    phi = phi_t[:, :, None, None] * S[None, None]
    phi_grad = np.stack(
        [phi_t[:, :, None, None] * Sgx[None, None], phi_t[:, :, None, None] * Sgy[None, None]],
        axis=-1,
    )
    w_t = tau * timebasis.quad_weights  # (nq_t,)
    weights = w_t[None, :, None, None] * space.quad_weights[None, None]
    weights = np.broadcast_to(weights, phi.shape).copy()
    return _Grid(weights=weights, phi=phi, phi_grad=phi_grad, shape=phi.shape)


def _discrete_fields(space: FeSpace, timebasis: SlabTimeBasis, trajectory):
    """Values and gradients of a pathwise trajectory on the quadrature grid."""
    U = np.stack(trajectory)  # (n_slabs, r+1, N_h)
    U_full = space.to_full(U)
    U_q = np.einsum("nim,qi->nqm", U_full, timebasis.basis_at_quad)
    vals = space.eval_at_quad(U_q)  # (n_slabs, nq_t, n_cells, nq_x)
    grads = space.grad_at_quad(U_q)
    return vals, grads


def _l2(grid: _Grid, field: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.weights * field**2)))


def _h1(grid: _Grid, grad_field: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.weights[..., None] * grad_field**2)))


def run_ensemble(
    bench: ManufacturedBenchmark,
    space: FeSpace,
    timebasis: SlabTimeBasis,
    n_slabs: int,
    seed: int,
    milestones: list[int],
    config: FgmresConfig = FgmresConfig(),
    solve: bool = True,
) -> list[MCErrorReport]:
    """Cumulative Monte-Carlo run reporting the error decomposition at each
    milestone sample count.

    With ``solve=False`` only the exact sampled fields are accumulated
    (pure sampling study); the discrete/total quantities are ``None``.
    """
    if list(milestones) != sorted(milestones) or len(set(milestones)) != len(milestones):
        raise ValueError("milestones must be strictly increasing")
    if milestones and milestones[0] < 1:
        raise ValueError("milestones must be >= 1")
    stream = SampleStream(seed=seed, M=bench.M)
    grid = _build_grid(space, timebasis, bench, n_slabs)
    acc_h = MomentAccumulator(grid.shape) if solve else None
    acc_ex = MomentAccumulator(grid.shape)

    # analytic statistics: M[u] = phi (c_0 = 1), V[u] = phi^2 sum_{a!=0} c_a^2
    v_coeff = bench.variance_coefficient()
    var_exact = v_coeff * grid.phi**2
    var_exact_grad = 2.0 * v_coeff * grid.phi[..., None] * grid.phi_grad

    reports: list[MCErrorReport] = []
    first: MCErrorReport | None = None
    wall = 0.0
    next_ms = 0
    for m in range(1, (milestones[-1] if milestones else 0) + 1):
        xi = stream.draw(m)
        g = bench.stochastic_factor(xi)
        acc_ex.add(g * grid.phi, g * grid.phi_grad)
        if solve:
            t0 = time.perf_counter()
            traj = pathwise_solve(
                xi, space, timebasis, bench, n_slabs, config, sample_index=m
            )
            wall += time.perf_counter() - t0
            vals, grads = _discrete_fields(space, timebasis, traj)
            acc_h.add(vals, grads)
        if next_ms < len(milestones) and m == milestones[next_ms]:
            next_ms += 1
            n = m
            has_var = n >= 2
            mc_mean = _l2(grid, acc_ex.mean() - grid.phi)
            mc_var = (
                _l2(grid, acc_ex.variance() - var_exact) if has_var else None
            )
            if solve:
                tot_mean = _l2(grid, acc_h.mean() - grid.phi)
                disc_mean = _l2(grid, acc_h.mean() - acc_ex.mean())
                disc_mean_h1 = _h1(grid, acc_h.mean_grad() - acc_ex.mean_grad())
                if has_var:
                    tot_var = _l2(grid, acc_h.variance() - var_exact)
                    disc_var = _l2(grid, acc_h.variance() - acc_ex.variance())
                    disc_var_h1 = _h1(
                        grid, acc_h.variance_grad() - acc_ex.variance_grad()
                    )
                else:
                    tot_var = disc_var = disc_var_h1 = None
            else:
                tot_mean = disc_mean = disc_mean_h1 = None
                tot_var = disc_var = disc_var_h1 = None
            rep = MCErrorReport(
                n_samples=n,
                tot_mean_l2=tot_mean,
                tot_var_l2=tot_var,
                disc_mean_l2=disc_mean,
                disc_mean_h1=disc_mean_h1,
                disc_var_l2=disc_var,
                disc_var_h1=disc_var_h1,
                mc_mean_l2=mc_mean,
                mc_var_l2=mc_var,
                wall_s=wall,
            )
            if first is not None and n > first.n_samples:
                if first.mc_mean_l2 > 0 and mc_mean > 0:
                    rep.rate_mc_mean = window_rate(
                        first.mc_mean_l2, mc_mean, first.n_samples, n
                    )
                if first.tot_mean_l2 and tot_mean:
                    rep.rate_tot_mean = window_rate(
                        first.tot_mean_l2, tot_mean, first.n_samples, n
                    )
                if first.mc_var_l2 and mc_var:
                    rep.rate_mc_var = window_rate(
                        first.mc_var_l2, mc_var, first.n_samples, n
                    )
                if first.tot_var_l2 and tot_var:
                    rep.rate_tot_var = window_rate(
                        first.tot_var_l2, tot_var, first.n_samples, n
                    )
            if first is None:
                first = rep
            reports.append(rep)
    return reports
