import numpy as np
import pytest

from momt.graphs import CentralGraph, SequentialGraph, unit_scaling
from momt.kernels import build_kernel
from momt.partial_info import (MeasurementConstraint, block_jacobian, block_residual,
                               dual_objective, newton_block_update,
                               recover_perturbations, scaling_from_duals, solve,
                               solution_marginals, wright_omega_update)
from momt.projections import project_marginal
from momt.sinkhorn import sinkhorn_multimarginal


def random_instance(rng, n=4, T=2, m=2, gamma=5.0, identity=False):
    """A small chain with a random linear constraint on every marginal."""
    K = build_kernel(rng.uniform(0.0, 2.0, (n, n)), 1.0)
    graph = SequentialGraph(K, steps=T)
    constraints = {}
    for t in range(T + 1):
        if identity:
            G = None
            r = rng.uniform(0.5, 1.5, n)
        else:
            G = rng.normal(size=(m, n))
            r = rng.normal(size=m)
        constraints[t] = MeasurementConstraint(G=G, r=r, gamma=gamma)
    return graph, constraints


class TestDualObjective:
    def test_zero_duals_value(self):
        rng = np.random.default_rng(0)
        graph, constraints = random_instance(rng)
        lam = {t: np.zeros(c.m()) for t, c in constraints.items()}
        got = dual_objective(graph, constraints, lam)
        mass = project_marginal(graph, unit_scaling(graph), 0).sum()
        assert got == pytest.approx(-1.0 * mass, rel=1e-12)  # eps = 1

    def test_matches_materialized_tensor(self):
        rng = np.random.default_rng(1)
        n, m = 3, 2
        K = build_kernel(rng.uniform(0, 2, (n, n)), 0.7)
        graph = SequentialGraph([K])
        constraints = {t: MeasurementConstraint(G=rng.normal(size=(m, n)),
                                                r=rng.normal(size=m), gamma=3.0)
                       for t in range(2)}
        lam = {t: rng.normal(size=m) for t in range(2)}
        eps = 0.7
        u = {t: scaling_from_duals(constraints[t], lam[t], eps, n) for t in range(2)}
        M = u[0][:, None] * K.dense() * u[1][None, :]
        want = -eps * M.sum()
        for t in range(2):
            want += lam[t] @ constraints[t].r - lam[t] @ lam[t] / (4 * 3.0)
        assert dual_objective(graph, constraints, lam, eps) == pytest.approx(want, rel=1e-10)


class TestBlockResidual:
    def test_zero_at_consistent_data(self):
        rng = np.random.default_rng(2)
        n, m = 5, 3
        G = rng.normal(size=(m, n))
        v = rng.uniform(0.5, 1.5, n)
        c = MeasurementConstraint(G=G, r=G @ v, gamma=2.0)
        res = block_residual(v, np.ones(n), c, np.zeros(m))
        np.testing.assert_allclose(res, 0.0, atol=1e-14)

    def test_matches_finite_difference_gradient(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            graph, constraints = random_instance(rng, n=3, T=2, m=2,
                                                 gamma=float(rng.uniform(1, 10)))
            eps = 1.0
            lam = {t: rng.normal(scale=0.3, size=constraints[t].m()) for t in range(3)}
            t = int(rng.integers(0, 3))
            u = {s: scaling_from_duals(constraints[s], lam[s], eps,
                                       graph.marginal_size(s)) for s in range(3)}
            v = project_marginal(graph, u, t) / u[t]
            res = block_residual(v, u[t], constraints[t], lam[t])
            h = 1e-5
            fd = np.zeros_like(lam[t])
            for k in range(len(fd)):
                lp = {s: w.copy() for s, w in lam.items()}
                lm = {s: w.copy() for s, w in lam.items()}
                lp[t][k] += h
                lm[t][k] -= h
                fd[k] = (dual_objective(graph, constraints, lp, eps)
                         - dual_objective(graph, constraints, lm, eps)) / (2 * h)
            # the residual is the negated gradient
            np.testing.assert_allclose(res, -fd, rtol=1e-6, atol=1e-8)

    def test_gamma_inf_identity_closed_form_root(self):
        rng = np.random.default_rng(4)
        n = 6
        v = rng.uniform(0.5, 1.5, n)
        r = rng.uniform(0.5, 1.5, n)
        c = MeasurementConstraint(G=None, r=r, gamma=np.inf)
        lam = wright_omega_update(v, r, np.inf, 0.5)
        np.testing.assert_allclose(lam, 0.5 * np.log(r / v), rtol=1e-12)
        u = np.exp(lam / 0.5)
        np.testing.assert_allclose(block_residual(v, u, c, lam), 0.0, atol=1e-12)


class TestJacobian:
    def test_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        n, m = 4, 3
        eps = 0.8
        G = rng.normal(size=(m, n))
        c = MeasurementConstraint(G=G, r=rng.normal(size=m), gamma=4.0)
        v = rng.uniform(0.5, 1.5, n)
        lam = rng.normal(scale=0.2, size=m)
        u = scaling_from_duals(c, lam, eps, n)
        J = block_jacobian(v, u, c, eps)
        h = 1e-6
        fd = np.zeros((m, m))
        for k in range(m):
            lp, lm = lam.copy(), lam.copy()
            lp[k] += h
            lm[k] -= h
            fp = block_residual(v, scaling_from_duals(c, lp, eps, n), c, lp)
            fm = block_residual(v, scaling_from_duals(c, lm, eps, n), c, lm)
            fd[:, k] = (fp - fm) / (2 * h)
        np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-7)

    def test_spd_lower_bound(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n, m = 5, 3
            gamma = float(rng.uniform(0.5, 20))
            G = rng.normal(size=(m, n))
            c = MeasurementConstraint(G=G, r=rng.normal(size=m), gamma=gamma)
            v = rng.uniform(0.0, 1.5, n)
            u = rng.uniform(0.5, 2.0, n)
            J = block_jacobian(v, u, c, 0.7)
            lo = np.min(np.linalg.eigvalsh(J))
            assert lo >= 1.0 / (2 * gamma) - 1e-12


class TestNewtonBlockUpdate:
    def test_zero_steps_at_root(self):
        rng = np.random.default_rng(7)
        n, m = 4, 2
        G = rng.normal(size=(m, n))
        v = rng.uniform(0.5, 1.5, n)
        c = MeasurementConstraint(G=G, r=G @ v, gamma=2.0)
        lam, steps, ok = newton_block_update(c, v, np.zeros(m), 1e-9, 30, epsilon=1.0)
        assert ok and steps == 0
        np.testing.assert_array_equal(lam, 0.0)

    def test_scalar_constraint_matches_bisection(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = 5
            eps = float(rng.uniform(0.3, 2.0))
            gamma = float(rng.uniform(0.5, 10.0))
            G = rng.uniform(0.1, 1.0, (1, n))
            v = rng.uniform(0.2, 1.5, n)
            r = rng.normal(size=1)
            c = MeasurementConstraint(G=G, r=r, gamma=gamma)

            def f(x):
                u = np.exp(G.T @ np.array([x]) / eps).ravel()
                return float((G @ (v * u) - r)[0]) + x / (2 * gamma)

            lo, hi = -1.0, 1.0
            while f(lo) > 0:
                lo *= 2
            while f(hi) < 0:
                hi *= 2
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if f(mid) > 0:
                    hi = mid
                else:
                    lo = mid
            root = 0.5 * (lo + hi)
            lam, _, ok = newton_block_update(c, v, np.zeros(1), 1e-13, 60, epsilon=eps)
            assert ok
            assert lam[0] == pytest.approx(root, abs=1e-10)

    def test_single_newton_step_near_convergence(self):
        rng = np.random.default_rng(9)
        graph, constraints = random_instance(rng, n=4, T=2, m=2, gamma=3.0)
        _, _, report = solve(graph, constraints, epsilon=1.0, outer_tol=1e-12,
                             max_sweeps=400, inner_tol=1e-11)
        assert report.converged
        assert max(report.newton_history[-3:]) <= 1


class TestWrightOmega:
    def test_root_zero_when_consistent(self):
        v = np.array([0.3, 1.2, 2.0])
        lam = wright_omega_update(v, v, 5.0, 0.7)
        np.testing.assert_allclose(lam, 0.0, atol=1e-12)

    def test_agrees_with_matrix_newton(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            eps = float(rng.uniform(0.2, 2.0))
            gamma = float(rng.uniform(0.2, 50.0))
            v = rng.uniform(0.05, 3.0, n)
            r = rng.uniform(-1.0, 3.0, n)
            c = MeasurementConstraint(G=np.eye(n), r=r, gamma=gamma)
            lam_n, _, ok = newton_block_update(c, v, np.zeros(n), 1e-13, 100,
                                               epsilon=eps)
            assert ok
            lam_w = wright_omega_update(v, r, gamma, eps)
            np.testing.assert_allclose(lam_w, lam_n, atol=1e-10)

    def test_gamma_to_infinity_limit(self):
        v = np.array([0.5, 1.0, 2.0])
        r = np.array([1.0, 2.0, 0.5])
        want = 0.4 * np.log(r / v)
        got = wright_omega_update(v, r, 1e14, 0.4)
        np.testing.assert_allclose(got, want, rtol=1e-6)
        np.testing.assert_allclose(wright_omega_update(v, r, np.inf, 0.4), want,
                                   rtol=1e-12)


class TestSolve:
    def test_reduces_to_sinkhorn_iterates(self):
        rng = np.random.default_rng(11)
        n, T = 4, 3
        K = build_kernel(rng.uniform(0, 2, (n, n)), 0.6)
        graph = SequentialGraph(K, steps=T)
        phis = {}
        for t in range(T + 1):
            phi = rng.uniform(0.5, 1.5, n)
            phis[t] = phi / phi.sum()
        constraints = {t: MeasurementConstraint(G=None, r=phis[t], gamma=np.inf)
                       for t in range(T + 1)}
        for sweeps in (1, 5, 20):
            u_ref, _ = sinkhorn_multimarginal(graph, phis, tol=0.0, max_iter=sweeps)
            _, u_got, _ = solve(graph, constraints, epsilon=0.6, outer_tol=0.0,
                                max_sweeps=sweeps)
            for t in range(T + 1):
                np.testing.assert_allclose(u_got[t], u_ref[t], rtol=1e-12)

    def test_dual_objective_nondecreasing_and_feasible(self):
        rng = np.random.default_rng(12)
        for trial in range(50):
            n = int(rng.integers(2, 5))
            T = int(rng.integers(1, 4))
            m = int(rng.integers(1, 4))
            gamma = float(rng.uniform(0.5, 20.0))
            graph, constraints = random_instance(rng, n=n, T=T, m=m, gamma=gamma)
            lam, u, report = solve(graph, constraints, epsilon=1.0, outer_tol=1e-10,
                                   max_sweeps=3000, inner_tol=1e-12)
            assert report.converged, f"trial {trial} did not converge"
            obj = np.array(report.objective_updates)
            assert np.all(np.diff(obj) >= -1e-9), f"trial {trial} not monotone"
            # converged state satisfies G P_t(M) = r_t - lambda_t / (2 gamma)
            for t, c in constraints.items():
                proj = project_marginal(graph, u, t)
                want = c.r - lam[t] / (2 * gamma)
                np.testing.assert_allclose(c.apply(proj), want, atol=1e-8)

    def test_final_residuals_reported(self):
        rng = np.random.default_rng(13)
        graph, constraints = random_instance(rng, gamma=2.0)
        _, _, report = solve(graph, constraints, outer_tol=1e-10, max_sweeps=300)
        assert report.converged
        assert max(report.final_residuals.values()) < 1e-8

    def test_unconstrained_marginals_skipped(self):
        rng = np.random.default_rng(14)
        n = 5
        K = build_kernel(rng.uniform(0, 2, (n, n)), 0.5)
        graph = CentralGraph(K, leaves=2)
        leaf = rng.uniform(0.5, 1.5, n)
        constraints = {j: MeasurementConstraint(G=None, r=leaf, gamma=np.inf)
                       for j in (1, 2)}
        lam, u, report = solve(graph, constraints, outer_tol=1e-12, max_sweeps=500)
        assert report.converged
        np.testing.assert_array_equal(u[0], np.ones(n))
        assert 0 not in lam
        # the unconstrained central marginal is still a valid distribution
        bary = solution_marginals(graph, u)[0]
        assert np.all(bary > 0)
        assert bary.sum() == pytest.approx(project_marginal(graph, u, 1).sum(), rel=1e-9)

    def test_perturbations_shrink_with_gamma(self):
        rng = np.random.default_rng(15)
        n, T, m = 4, 2, 3
        K = build_kernel(rng.uniform(0, 2, (n, n)), 1.0)
        graph = SequentialGraph(K, steps=T)
        G = rng.uniform(0.0, 1.0, (m, n))
        u_true = {t: rng.uniform(0.5, 1.5, n) for t in range(T + 1)}
        norms = []
        for gamma in (1.0, 10.0, 100.0):
            constraints = {}
            for t in range(T + 1):
                phi = project_marginal(graph, u_true, t)
                constraints[t] = MeasurementConstraint(G=G, r=G @ phi, gamma=gamma)
            lam, _, report = solve(graph, constraints, outer_tol=1e-11, max_sweeps=500)
            assert report.converged
            deltas = recover_perturbations(lam, constraints)
            norms.append(max(np.linalg.norm(d) for d in deltas.values()))
        assert norms[0] > norms[1] > norms[2]

    def test_recover_perturbations_trivial(self):
        c = MeasurementConstraint(G=None, r=np.ones(3), gamma=2.0)
        out = recover_perturbations({0: np.zeros(3)}, {0: c})
        np.testing.assert_array_equal(out[0], 0.0)
        cinf = MeasurementConstraint(G=None, r=np.ones(3), gamma=np.inf)
        out = recover_perturbations({0: np.array([1.0, 2.0, 3.0])}, {0: cinf})
        np.testing.assert_array_equal(out[0], 0.0)

    def test_constraint_dimension_validation(self):
        rng = np.random.default_rng(16)
        K = build_kernel(rng.uniform(0, 1, (3, 3)), 1.0)
        graph = SequentialGraph([K])
        bad = {0: MeasurementConstraint(G=rng.normal(size=(2, 4)),
                                        r=np.zeros(2), gamma=1.0)}
        with pytest.raises(ValueError, match="columns"):
            solve(graph, bad)
