"""Manufactured benchmark: diffusion expansion, exact-solution structure,
closed-form norms, truncation formula, and error evaluation oracles."""

import itertools
import math

import numpy as np
import pytest

from sgheat import benchmark, spatial_fem, time_slab
from sgheat.benchmark import (
    PHI_H1_SQ,
    PHI_L2_SQ,
    ErrorReport,
    Poly2,
    default_factors,
    evaluate_errors,
    expand_diffusion,
    make_benchmark,
    rates,
    toy_benchmark,
    truncation_error,
)
from sgheat.chaos import enumerate_basis, gauss_hermite, hermite_eval, project


class TestPoly2:
    def test_eval_grad_product(self):
        p = Poly2(((2.0, 1, 0), (1.0, 0, 2)))  # 2x + y^2
        assert p(3.0, 2.0) == pytest.approx(10.0)
        gx, gy = p.grad(3.0, 2.0)
        assert (gx, gy) == (2.0, 4.0)
        sq = p * p
        assert sq(3.0, 2.0) == pytest.approx(100.0)


class TestDiffusionExpansion:
    def test_modes_match_quadrature_projection(self):
        # chaos coefficients of a(x, .) at fixed x by tensor GH quadrature
        field = expand_diffusion(0.2, default_factors())
        basis = enumerate_basis(4, 2)
        rule = gauss_hermite(5)
        x, y = 0.37, -0.61

        def a_at(xi):
            return field.sample(xi)(x, y)

        coeffs = project(a_at, basis, rule)
        for alpha, idx in basis.id_of.items():
            expected = field.modes[alpha](x, y) if alpha in field.modes else 0.0
            assert coeffs[idx] == pytest.approx(expected, abs=1e-10)

    def test_active_set_size(self):
        # 1 zero mode + M squares + C(M,2) cross modes
        field = expand_diffusion(0.2, default_factors())
        assert len(field.active_set) == 1 + 4 + 6
        assert all(sum(mu) in (0, 2) for mu in field.active_set)

    def test_sample_positive(self):
        field = expand_diffusion(0.2, default_factors())
        rng = np.random.default_rng(0)
        xs = rng.uniform(-1, 1, (50, 2))
        for xi in rng.standard_normal((20, 4)):
            a = field.sample(xi)
            assert np.all(a(xs[:, 0], xs[:, 1]) >= 0.2)

    def test_invalid_d_min(self):
        with pytest.raises(ValueError):
            expand_diffusion(0.0)


class TestClosedFormNorms:
    def test_phi_l2(self):
        # ||phi||^2 = int t^8 * int sin^2 sin^2 = (1/9) * 1
        bench = toy_benchmark()
        from numpy.polynomial.legendre import leggauss

        s, w = leggauss(20)
        val_x = np.dot(w, np.sin(0.5 * np.pi * (s + 1)) ** 2)
        val_t = np.dot(0.5 * w, (0.5 * (s + 1)) ** 8)
        assert val_x * val_x * val_t == pytest.approx(PHI_L2_SQ, rel=1e-12)

    def test_phi_h1(self):
        assert PHI_H1_SQ == pytest.approx(math.pi**2 / 18.0)


class TestStochasticFactor:
    def test_expansion_at_point(self):
        bench = toy_benchmark()
        xi = (0.7, -1.2)
        expected = sum(
            c
            * hermite_eval(a[0], xi[0])
            * hermite_eval(a[1], xi[1])
            for c, a in zip(bench.coeffs, bench.basis_q.indices)
        )
        assert bench.stochastic_factor(xi) == pytest.approx(expected)

    def test_exact_solution_separation(self):
        bench = toy_benchmark()
        xi = (0.3, 0.5)
        x, y, t = 0.2, -0.3, 0.8
        assert bench.exact(x, y, t, xi) == pytest.approx(
            bench.phi(x, y, t) * bench.stochastic_factor(xi)
        )

    def test_variance_coefficient(self):
        bench = toy_benchmark()
        # sum over alpha != 0 of eta^(2|alpha|): 2 deg-1 + 3 deg-2 modes
        eta = bench.eta
        assert bench.variance_coefficient() == pytest.approx(
            2 * eta**2 + 3 * eta**4
        )

    def test_sampled_forcing_residual(self):
        # f = u_t - div(a grad u) checked by finite differences
        bench = toy_benchmark()
        xi = np.array([0.4, -0.8])
        a = bench.diffusion.sample(xi)
        u = lambda x, y, t: bench.exact(x, y, t, xi)
        f = bench.sampled_forcing(xi)
        x, y, t, eps = 0.3, 0.1, 0.6, 1e-5
        u_t = (u(x, y, t + eps) - u(x, y, t - eps)) / (2 * eps)

        def flux_x(xx, yy):
            return a(xx, yy) * (u(xx + eps, yy, t) - u(xx - eps, yy, t)) / (2 * eps)

        def flux_y(xx, yy):
            return a(xx, yy) * (u(xx, yy + eps, t) - u(xx, yy - eps, t)) / (2 * eps)

        div = (flux_x(x + eps, y) - flux_x(x - eps, y)) / (2 * eps) + (
            flux_y(x, y + eps) - flux_y(x, y - eps)
        ) / (2 * eps)
        assert f(x, y, t) == pytest.approx(u_t - div, rel=1e-4)


class TestTruncationFormula:
    @pytest.mark.parametrize("M,q", [(2, 2), (4, 6)])
    def test_matches_direct_index_sum(self, M, q):
        bench = make_benchmark(M=M, q=q)
        for p in range(q):
            tail = sum(
                bench.eta ** (2 * sum(alpha))
                for alpha in itertools.product(range(q + 1), repeat=M)
                if p < sum(alpha) <= q
            )
            expected = math.sqrt(PHI_L2_SQ * tail)
            assert truncation_error(bench, p) == pytest.approx(expected, rel=1e-12)

    def test_zero_beyond_q(self):
        bench = toy_benchmark()
        assert truncation_error(bench, 2) == 0.0
        assert truncation_error(bench, 5) == 0.0

    def test_m4_p0_value(self):
        # (1/3) sqrt(sum_{1<=|a|<=6} eta^(2|a|)) for M=4, eta=0.35
        bench = make_benchmark()
        assert truncation_error(bench, 0) == pytest.approx(0.2761917, rel=1e-5)

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            truncation_error(toy_benchmark(), -1)


class TestErrorEvaluation:
    def test_exact_modal_trajectory_reaches_interpolation_floor(self):
        # inject u_alpha = c_alpha * I_h(phi) at the time nodes: errors are
        # pure interpolation errors, far below the truncation scale
        bench = toy_benchmark()
        basis = enumerate_basis(2, 2)
        space = spatial_fem.FeSpace(spatial_fem.QuadMesh(8), 2)
        tb = time_slab.build_basis(3, 0.125)
        S = spatial_fem.interpolate(space, bench.space_factor)
        c = np.array(
            [bench.coeffs[bench.basis_q.id_of[a]] for a in basis.indices]
        )
        traj = []
        for n in range(8):
            t_nodes = (n + tb.nodes) * tb.tau
            U = np.einsum("a,i,m->aim", c, t_nodes**4, S)
            traj.append(U)
        rep = evaluate_errors(traj, bench, basis, space, tb)
        assert rep.full_l2 < 1e-3
        assert rep.mean_l2 < 1e-3
        assert rep.var_l2 < 1e-3

    def test_zero_trajectory_gives_exact_norms(self):
        # zero solution: full error = ||u_ex||, variance error = ||V||
        bench = toy_benchmark()
        basis = enumerate_basis(2, 2)
        space = spatial_fem.FeSpace(spatial_fem.QuadMesh(4), 1)
        tb = time_slab.build_basis(1, 0.25)
        traj = [np.zeros((len(basis), 2, space.n_dofs)) for _ in range(4)]
        rep = evaluate_errors(traj, bench, basis, space, tb)
        # the r+2-point time rule integrates t^8 only approximately
        norm_sq = PHI_L2_SQ * float(np.sum(bench.coeffs**2))
        assert rep.full_l2 == pytest.approx(math.sqrt(norm_sq), rel=1e-4)
        assert rep.mean_l2 == pytest.approx(math.sqrt(PHI_L2_SQ), rel=1e-4)
        v_norm = bench.variance_coefficient() * math.sqrt(9 / (16 * 17))
        assert rep.var_l2 == pytest.approx(v_norm, rel=1e-3)

    def test_truncated_basis_adds_analytic_tail(self):
        bench = toy_benchmark()
        basis0 = enumerate_basis(2, 0)
        space = spatial_fem.FeSpace(spatial_fem.QuadMesh(4), 1)
        tb = time_slab.build_basis(1, 0.25)
        # inject the exact zero mode: full error equals the truncation tail
        S = spatial_fem.interpolate(space, bench.space_factor)
        traj = []
        for n in range(4):
            t_nodes = (n + tb.nodes) * tb.tau
            traj.append(np.einsum("i,m->im", t_nodes**4, S)[None])
        rep = evaluate_errors(traj, bench, basis0, space, tb)
        assert rep.full_l2 == pytest.approx(
            truncation_error(bench, 0), rel=2e-2
        )


class TestRates:
    def test_reference_values(self):
        # exact halving with N_xi doubling: r_p = log 2, r_xi = 1
        r_p, r_xi = rates([1.0, 0.5, 0.25], [1, 2, 4])
        assert r_p[0] is None and r_xi[0] is None
        assert r_p[1] == pytest.approx(math.log(2.0))
        assert r_xi[1] == pytest.approx(1.0)

    def test_non_positive_marked_none(self):
        r_p, r_xi = rates([1.0, 0.0], [1, 2])
        assert r_p[1] is None and r_xi[1] is None


class TestReport:
    def test_fields(self):
        rep = ErrorReport(
            p_xi=2, n_xi=6, full_l2=1e-3, full_h1=1e-2, mean_l2=1e-4,
            mean_h1=1e-3, var_l2=1e-4, var_h1=1e-3, n_sg_slab=100, work=500,
        )
        assert rep.p_xi == 2 and rep.work == 500
