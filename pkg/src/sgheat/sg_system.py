"""Slabwise stochastic Galerkin system: matrix-free Kronecker operator,
load/initial vectors from projected forcing modes, and the causal march.

The global slab operator kron(M_xi, A_t, M_x) + sum_mu kron(G_mu, B_t, K_mu)
is never assembled; only its action on block vectors is implemented.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from . import spatial_fem
from .benchmark import DiffusionField, ManufacturedBenchmark
from .chaos import ChaosBasis, triple_products, triple_value
from .krylov import BlockJacobiPreconditioner, FgmresConfig, build_block_jacobi, fgmres
from .spatial_fem import FeSpace
from .time_slab import SlabTimeBasis


@dataclass
class SGBlockVector:
    """Slab unknowns indexed (stochastic mode, time node, spatial DoF).

    The flat layout places block b(alpha, i) = id(alpha) * (r+1) + i of
    length N_h at offset b * N_h, matching the basis ordering.
    """

    data: np.ndarray  # shape (N_xi, r+1, N_h)

    @classmethod
    def zeros(cls, n_modes: int, n_time: int, n_space: int) -> "SGBlockVector":
        return cls(np.zeros((n_modes, n_time, n_space)))

    @property
    def shape(self):
        return self.data.shape

    def block(self, alpha_id: int, i: int) -> np.ndarray:
        return self.data[alpha_id, i]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass
class SolverStats:
    """Per-run FGMRES and cost statistics."""

    n_sg_slab: int
    slab_iterations: list[int] = field(default_factory=list)
    vmult_calls: int = 0
    prec_calls: int = 0
    wall_s: float = 0.0
    solve_s: float = 0.0
    apply_s: float = 0.0
    prec_s: float = 0.0

    @property
    def avg_fgmres(self) -> float:
        if not self.slab_iterations:
            return 0.0
        return sum(self.slab_iterations) / len(self.slab_iterations)

    @property
    def work(self) -> int:
        return self.n_sg_slab * self.prec_calls


@dataclass
class SlabOperator:
    """Matrix-free slab operator and transfer operator for uniform slabs."""

    basis: ChaosBasis
    timebasis: SlabTimeBasis
    M_x: csr_matrix
    K_mus: list[csr_matrix]
    G_csr: list[csr_matrix]
    G_diags: np.ndarray  # (N_xi, n_mu)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.basis), self.timebasis.n_nodes, self.M_x.shape[0])

    def _check(self, u: np.ndarray) -> None:
        if u.shape != self.shape:
            raise ValueError(f"dimension mismatch: {u.shape} vs {self.shape}")

    def apply(self, u: np.ndarray) -> np.ndarray:
        self._check(u)
        n_xi, nt, nh = u.shape
        flat = u.reshape(-1, nh)
        Mu = (self.M_x @ flat.T).T.reshape(u.shape)
        y = np.einsum("ij,ajm->aim", self.timebasis.A_t, Mu)
        for G, K in zip(self.G_csr, self.K_mus):
            Ku = (K @ flat.T).T.reshape(u.shape)
            BKu = np.einsum("ij,ajm->aim", self.timebasis.B_t, Ku)
            y += (G @ BKu.reshape(n_xi, -1)).reshape(u.shape)
        return y

    def apply_transfer(self, u_prev: np.ndarray) -> np.ndarray:
        self._check(u_prev)
        nh = u_prev.shape[-1]
        Mu = (self.M_x @ u_prev.reshape(-1, nh).T).T.reshape(u_prev.shape)
        return np.einsum("ij,ajm->aim", self.timebasis.C_t, Mu)


def apply_operator(op: SlabOperator, u: SGBlockVector) -> SGBlockVector:
    return SGBlockVector(op.apply(u.data))


def apply_transfer(op: SlabOperator, u_prev: SGBlockVector) -> SGBlockVector:
    return SGBlockVector(op.apply_transfer(u_prev.data))


def build_slab_operator(
    space: FeSpace,
    timebasis: SlabTimeBasis,
    basis: ChaosBasis,
    diffusion: DiffusionField,
) -> SlabOperator:
    """Assemble spatial matrices and stochastic couplings for the benchmark
    coefficient; one operator serves all slabs (time-independent data)."""
    M_x = spatial_fem.assemble_mass(space)
    K_mus = []
    tensors = []
    for mu in diffusion.active_set:
        K_mus.append(spatial_fem.assemble_weighted_stiffness(space, diffusion.modes[mu]))
        tensors.append(triple_products(basis, mu))
    G_csr = [t.to_csr() for t in tensors]
    G_diags = np.stack([t.diagonal() for t in tensors], axis=-1)
    return SlabOperator(
        basis=basis,
        timebasis=timebasis,
        M_x=M_x,
        K_mus=K_mus,
        G_csr=G_csr,
        G_diags=G_diags,
    )


@dataclass(frozen=True)
class ForcingMode:
    """Analytic projected forcing f_beta(x,t) = 4t^3 c S(x) - t^4 P(x).

    ``spatial_part`` is P = sum_mu w_mu (grad a_mu . grad S + a_mu lap S)
    with w_mu the stochastic coupling weights of this test mode.
    """

    c_beta: float
    spatial_part: object  # callable (x, y) -> array

    def __call__(self, x, y, t):
        s = ManufacturedBenchmark.space_factor(x, y)
        return 4.0 * t**3 * self.c_beta * s - t**4 * self.spatial_part(x, y)

    @property
    def is_zero(self) -> bool:
        return self.c_beta == 0.0 and self.spatial_part is None


def projected_forcing_modes(
    bench: ManufacturedBenchmark, basis: ChaosBasis
) -> list[ForcingMode]:
    """Per-mode forcing fields from the exact modal/coupling structure."""
    modes = []
    mus = bench.diffusion.active_set
    for beta in basis.indices:
        c_beta = (
            float(bench.coeffs[bench.basis_q.id_of[beta]])
            if beta in bench.basis_q.id_of
            else 0.0
        )
        weights = []
        for mu in mus:
            w = 0.0
            for alpha in bench.basis_q.indices:
                g = triple_value(mu, beta, alpha)
                if g != 0.0:
                    w += g * float(bench.coeffs[bench.basis_q.id_of[alpha]])
            weights.append(w)
        if c_beta == 0.0 and all(w == 0.0 for w in weights):
            modes.append(ForcingMode(c_beta=0.0, spatial_part=None))
            continue

        active = [
            (w, bench.diffusion.modes[mu]) for w, mu in zip(weights, mus) if w != 0.0
        ]

        def spatial(x, y, active=active):
            sgx, sgy = ManufacturedBenchmark.space_factor_grad(x, y)
            lap = ManufacturedBenchmark.space_factor_laplacian(x, y)
            out = 0.0
            for w, a_mu in active:
                agx, agy = a_mu.grad(x, y)
                out = out + w * (agx * sgx + agy * sgy + a_mu(x, y) * lap)
            return out

        modes.append(ForcingMode(c_beta=c_beta, spatial_part=spatial))
    return modes


def _forcing_load_vectors(space: FeSpace, f_modes: list[ForcingMode]):
    """Time-independent spatial load vectors behind each forcing mode.

    Returns (L_s, L_p): L_s is the load of the spatial sine factor, L_p[beta]
    the load of the mode's spatial part (zero row for zero modes).
    """
    L_s = spatial_fem.assemble_load_vector(space, ManufacturedBenchmark.space_factor)
    L_p = np.zeros((len(f_modes), space.n_dofs))
    for b, mode in enumerate(f_modes):
        if mode.spatial_part is not None:
            L_p[b] = spatial_fem.assemble_load_vector(space, mode.spatial_part)
    return L_s, L_p


def assemble_load(
    space: FeSpace,
    timebasis: SlabTimeBasis,
    f_modes: list[ForcingMode],
    n: int,
    _cache: tuple | None = None,
) -> np.ndarray:
    """Slab load vector F[(i, beta, m)] = int_In int_D f_beta v_i phi_m.

    ``n`` is the zero-based slab index; the separable time profile is
    integrated by the module's Gauss rule.
    """
    L_s, L_p = _cache if _cache is not None else _forcing_load_vectors(space, f_modes)
    tau = timebasis.tau
    tq = n * tau + tau * timebasis.quad_points
    c = np.array([m.c_beta for m in f_modes])
    # time weights per (quad point, time test function)
    wv = tau * timebasis.quad_weights[:, None] * timebasis.basis_at_quad
    w3 = np.einsum("q,qi->i", 4.0 * tq**3, wv)
    w4 = np.einsum("q,qi->i", tq**4, wv)
    F = np.einsum("b,i,m->bim", c, w3, L_s) - np.einsum("i,bm->bim", w4, L_p)
    return F


def initial_trace(
    space: FeSpace,
    timebasis: SlabTimeBasis,
    basis: ChaosBasis,
    u0_modes: np.ndarray | None,
) -> np.ndarray:
    """Initial trace vector v_i(t0+) <u0_alpha, phi_m>; zero datum -> zero."""
    n_xi, nt, nh = len(basis), timebasis.n_nodes, space.n_dofs
    if u0_modes is None:
        return np.zeros((n_xi, nt, nh))
    M_x = spatial_fem.assemble_mass(space)
    Mu0 = (M_x @ u0_modes.T).T  # (N_xi, N_h)
    return np.einsum("i,am->aim", timebasis.basis_at_zero, Mu0)


def march(
    space: FeSpace,
    timebasis: SlabTimeBasis,
    basis: ChaosBasis,
    bench: ManufacturedBenchmark,
    n_slabs: int,
    config: FgmresConfig = FgmresConfig(),
    operator: SlabOperator | None = None,
    preconditioner: BlockJacobiPreconditioner | None = None,
) -> tuple[list[np.ndarray], SolverStats]:
    """Causal slab-by-slab solve of the SG system for the benchmark problem.

    Returns the per-slab coefficient blocks and accumulated solver stats.
    """
    t_start = time.perf_counter()
    if operator is None:
        operator = build_slab_operator(space, timebasis, basis, bench.diffusion)
    if preconditioner is None:
        preconditioner = build_block_jacobi(
            timebasis.A_t,
            timebasis.B_t,
            operator.M_x,
            operator.K_mus,
            operator.G_diags,
        )
    f_modes = projected_forcing_modes(bench, basis)
    load_cache = _forcing_load_vectors(space, f_modes)
    shape = operator.shape
    stats = SolverStats(n_sg_slab=int(np.prod(shape)))

    def op_flat(v):
        t0 = time.perf_counter()
        out = operator.apply(v.reshape(shape)).ravel()
        stats.vmult_calls += 1
        stats.apply_s += time.perf_counter() - t0
        return out

    def prec_flat(v):
        t0 = time.perf_counter()
        out = preconditioner.apply(v)
        stats.prec_calls += 1
        stats.prec_s += time.perf_counter() - t0
        return out

    trajectory: list[np.ndarray] = []
    u_prev: np.ndarray | None = None
    for n in range(n_slabs):
        rhs = assemble_load(space, timebasis, f_modes, n, _cache=load_cache)
        if n == 0:
            rhs += initial_trace(space, timebasis, basis, None)
        else:
            rhs += operator.apply_transfer(u_prev)
        t0 = time.perf_counter()
        try:
            x, iters, _ = fgmres(op_flat, prec_flat, rhs.ravel(), config)
        except Exception as exc:
            raise RuntimeError(f"slab {n + 1} solve failed: {exc}") from exc
        stats.solve_s += time.perf_counter() - t0
        stats.slab_iterations.append(iters)
        u_prev = x.reshape(shape)
        trajectory.append(u_prev)
    stats.wall_s = time.perf_counter() - t_start
    return trajectory, stats
