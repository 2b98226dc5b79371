"""Slab operator, transfer, forcing projection, and march against dense
Kronecker and quadrature oracles."""

import itertools

import numpy as np
import pytest

from sgheat import benchmark, sg_system, spatial_fem, time_slab
from sgheat.chaos import enumerate_basis, gauss_hermite, triple_products
from sgheat.krylov import FgmresConfig
from sgheat.sg_system import SGBlockVector


def dense_slab_matrix(op):
    """Dense kron(I, A_t, M_x) + sum_mu kron(G_mu, B_t, K_mu)."""
    n_xi = len(op.basis)
    A = np.kron(
        np.eye(n_xi), np.kron(op.timebasis.A_t, op.M_x.toarray())
    )
    for G, K in zip(op.G_csr, op.K_mus):
        A += np.kron(G.toarray(), np.kron(op.timebasis.B_t, K.toarray()))
    return A


def build(M=2, p=1, r=1, cells=2, k=1, n_slabs=4):
    factors = (benchmark.Poly2(((0.5, 1, 1),)),) if M == 1 else None
    bench = benchmark.make_benchmark(M=M, q=2, eta=0.35, factors=factors)
    basis = enumerate_basis(M, p)
    space = spatial_fem.FeSpace(spatial_fem.QuadMesh(cells), k)
    tb = time_slab.build_basis(r, 1.0 / n_slabs)
    op = sg_system.build_slab_operator(space, tb, basis, bench.diffusion)
    return bench, basis, space, tb, op


class TestKroneckerOracle:
    @pytest.mark.parametrize(
        "M,p,r,cells",
        list(itertools.product([1, 2], [0, 1, 2], [0, 1], [2, 3])),
    )
    def test_apply_matches_dense(self, M, p, r, cells):
        _, basis, space, tb, op = build(M=M, p=p, r=r, cells=cells)
        A = dense_slab_matrix(op)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(op.shape)
        ref = (A @ u.ravel()).reshape(op.shape)
        out = op.apply(u)
        np.testing.assert_allclose(
            out, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max()
        )

    @pytest.mark.parametrize("r", [0, 1])
    def test_transfer_matches_dense(self, r):
        _, basis, space, tb, op = build(M=2, p=2, r=r, cells=3)
        n_xi = len(basis)
        J = np.kron(np.eye(n_xi), np.kron(tb.C_t, op.M_x.toarray()))
        u = np.random.default_rng(1).standard_normal(op.shape)
        np.testing.assert_allclose(
            op.apply_transfer(u), (J @ u.ravel()).reshape(op.shape), rtol=1e-12
        )

    def test_dimension_mismatch(self):
        _, _, _, _, op = build()
        with pytest.raises(ValueError):
            op.apply(np.zeros((1, 1, 1)))

    def test_block_vector_layout(self):
        v = SGBlockVector.zeros(3, 2, 4)
        v.data[2, 1, :] = 7.0
        flat = v.flat()
        b = 2 * 2 + 1  # b(alpha, i) = id(alpha) * (r+1) + i
        np.testing.assert_allclose(flat[b * 4 : (b + 1) * 4], 7.0)
        np.testing.assert_allclose(v.block(2, 1), 7.0)


class TestForcingProjection:
    def test_matches_quadrature_projection_of_pathwise_forcing(self):
        # E[f(.,t,.) Psi_beta] by tensor GH quadrature over xi
        bench, basis, space, tb, _ = build(M=2, p=2)
        modes = sg_system.projected_forcing_modes(bench, basis)
        rule = gauss_hermite(10)
        pts = np.array(list(itertools.product(rule.nodes, repeat=2)))
        wts = np.array(
            [w1 * w2 for w1, w2 in itertools.product(rule.weights, repeat=2)]
        )
        x, y, t = 0.3, -0.4, 0.7
        fvals = np.array(
            [bench.sampled_forcing(xi)(x, y, t) for xi in pts]
        )
        for beta, mode in zip(basis.indices, modes):
            psi = np.array([basis.eval(beta, xi) for xi in pts])
            ref = float(np.dot(wts, fvals * psi))
            assert mode(x, y, t) == pytest.approx(ref, rel=1e-8, abs=1e-10)

    def test_zero_modes_flagged(self):
        # modes of degree > q with no coupling neighbors inside Lambda_q are zero
        bench = benchmark.toy_benchmark()  # q = 2
        basis = enumerate_basis(2, 6)
        modes = sg_system.projected_forcing_modes(bench, basis)
        high = [m for a, m in zip(basis.indices, modes) if sum(a) > 4]
        assert high and all(m.is_zero for m in high)


class TestLoadAndTrace:
    def test_load_matches_direct_spacetime_quadrature(self):
        bench, basis, space, tb, _ = build(M=2, p=1, r=1, cells=3, k=2)
        modes = sg_system.projected_forcing_modes(bench, basis)
        n = 2
        F = sg_system.assemble_load(space, tb, modes, n)
        # direct: tau sum_q w_q v_i(s_q) * int_D f_beta(x, t_q) phi_m dx
        tau = tb.tau
        ref = np.zeros_like(F)
        for qi, (s, w) in enumerate(zip(tb.quad_points, tb.quad_weights)):
            t = n * tau + tau * s
            for b, mode in enumerate(modes):
                load = spatial_fem.assemble_load_vector(
                    space, lambda x, y: mode(x, y, t)
                )
                for i in range(tb.n_nodes):
                    ref[b, i] += tau * w * tb.basis_at_quad[qi, i] * load
        np.testing.assert_allclose(F, ref, rtol=1e-12, atol=1e-14)

    def test_initial_trace_zero_datum(self):
        _, basis, space, tb, _ = build()
        trace = sg_system.initial_trace(space, tb, basis, None)
        assert not trace.any()

    def test_initial_trace_structure(self):
        _, basis, space, tb, op = build(M=2, p=1, r=1)
        u0 = np.random.default_rng(2).standard_normal((len(basis), space.n_dofs))
        trace = sg_system.initial_trace(space, tb, basis, u0)
        ref = np.einsum(
            "i,am->aim", tb.basis_at_zero, (op.M_x @ u0.T).T
        )
        np.testing.assert_allclose(trace, ref)


class TestMarch:
    def test_slab_solutions_satisfy_dense_system(self):
        bench, basis, space, tb, op = build(M=2, p=2, r=1, cells=3, k=1, n_slabs=4)
        traj, stats = sg_system.march(space, tb, basis, bench, 4)
        assert len(traj) == 4
        A = dense_slab_matrix(op)
        modes = sg_system.projected_forcing_modes(bench, basis)
        n_xi = len(basis)
        J = np.kron(np.eye(n_xi), np.kron(tb.C_t, op.M_x.toarray()))
        for n, U in enumerate(traj):
            rhs = sg_system.assemble_load(space, tb, modes, n).ravel()
            if n > 0:
                rhs = rhs + J @ traj[n - 1].ravel()
            np.testing.assert_allclose(
                A @ U.ravel(), rhs, rtol=1e-7, atol=1e-12
            )

    def test_stats_bookkeeping(self):
        bench, basis, space, tb, _ = build(M=2, p=1, n_slabs=4)
        _, stats = sg_system.march(space, tb, basis, bench, 4)
        assert len(stats.slab_iterations) == 4
        assert stats.prec_calls >= sum(stats.slab_iterations)
        assert stats.work == stats.n_sg_slab * stats.prec_calls
        assert stats.n_sg_slab == len(basis) * tb.n_nodes * space.n_dofs
        assert stats.avg_fgmres == pytest.approx(
            sum(stats.slab_iterations) / 4
        )

    def test_solver_failure_reports_slab(self):
        bench, basis, space, tb, _ = build(M=2, p=2, n_slabs=2)
        cfg = FgmresConfig(max_iter=1, rel_tol=1e-14)
        with pytest.raises(RuntimeError, match="slab 1"):
            sg_system.march(space, tb, basis, bench, 2, cfg)
