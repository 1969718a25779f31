import numpy as np
import pytest

from blockbilevel.oracle import exact_hypergradient, exact_lower_solve, \
    finite_difference_grad, oracle_consistency_suite, upper_objective
from blockbilevel.problems import make_quadratic


class TestFiniteDifference:
    def test_quadratic_norm(self):
        g = finite_difference_grad(lambda x: 0.5 * float(x @ x),
                                   np.array([1.0, 2.0]))
        assert np.allclose(g, [1.0, 2.0], atol=1e-9)

    def test_linear_exact_for_any_h(self):
        c = np.array([2.0, -3.0, 0.5])
        for h in (1e-1, 1e-5, 1e-8):
            g = finite_difference_grad(lambda x: float(c @ x),
                                       np.zeros(3), h=h)
            assert np.allclose(g, c, atol=1e-6)

    def test_error_scales_quadratically_in_h(self):
        # central differences: error ~ h^2 on smooth nonquadratic functions
        x = np.array([0.3, -0.2])
        true = np.array([np.cos(0.3) * np.exp(-0.2),
                         np.sin(0.3) * np.exp(-0.2)])
        hs = np.array([1e-2, 3e-3, 1e-3, 3e-4])
        errs = []
        for h in hs:
            g = finite_difference_grad(
                lambda v: float(np.sin(v[0]) * np.exp(v[1])), x, h=h)
            errs.append(np.linalg.norm(g - true))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.2

    def test_bad_h(self):
        with pytest.raises(ValueError):
            finite_difference_grad(lambda x: 0.0, np.zeros(1), h=0.0)


class TestExactLowerSolve:
    def test_closed_form_quadratic(self, quad_small):
        x = np.random.default_rng(0).standard_normal(quad_small.d_x)
        for i in range(3):
            y = exact_lower_solve(quad_small, x, i)
            expected = quad_small.A[i] @ x / (1.0 + quad_small.lam_reg)
            assert np.allclose(y, expected, atol=1e-12)

    def test_zero_input_zero_solution(self, quad_small):
        y = exact_lower_solve(quad_small, np.zeros(quad_small.d_x), 0)
        assert np.allclose(y, 0.0, atol=1e-15)

    def test_gd_path_residual_postcondition(self, hyperweight_tiny):
        # no closed form here: deterministic descent must hit the tolerance
        prob = hyperweight_tiny
        x = np.zeros(prob.d_x)
        tol = 1e-10
        y = exact_lower_solve(prob, x, 1, tol=tol)
        res = np.linalg.norm(
            prob.grad_y_g(1, x, y, prob.full_lower_batch(1)))
        assert res <= tol


class TestExactHypergradient:
    def test_matches_closed_form(self, quad_small):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal(quad_small.d_x)
            g = exact_hypergradient(quad_small, x)
            assert np.allclose(g, quad_small.exact_hypergradient_closed(x),
                               atol=1e-10)

    def test_matches_finite_differences_tiny_logistic(self, hyperweight_tiny):
        # full-coordinate differences over d_x = 50 are needlessly slow;
        # differencing the restriction to a random subspace checks the same
        # projections of the gradient
        prob = hyperweight_tiny
        rng = np.random.default_rng(2)
        x = 0.1 * rng.standard_normal(prob.d_x)
        U, _ = np.linalg.qr(rng.standard_normal((prob.d_x, 6)))
        g = exact_hypergradient(prob, x)
        fd = finite_difference_grad(
            lambda th: upper_objective(prob, x + U @ th), np.zeros(6))
        rel = np.linalg.norm(U.T @ g - fd) / np.linalg.norm(fd)
        assert rel <= 1e-4

    def test_zero_at_stationary_point(self, quad_small):
        g = exact_hypergradient(quad_small, quad_small.x_star)
        assert np.linalg.norm(g) <= 1e-8

    def test_dense_and_iterative_solves_agree(self, quad_small):
        x = np.random.default_rng(3).standard_normal(quad_small.d_x)
        g_dense = exact_hypergradient(quad_small, x, solver="dense")
        g_cg = exact_hypergradient(quad_small, x, solver="cg")
        assert np.linalg.norm(g_dense - g_cg) <= 1e-8


def test_consistency_suite_clean_on_quadratic(quad_small):
    results = oracle_consistency_suite(quad_small, seed=0)
    bad = [r for r in results if not r.passed]
    assert not bad, bad
