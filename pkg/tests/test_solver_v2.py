import dataclasses

import numpy as np
import pytest

from blockbilevel import Batch, CountingOracle, HyperParams, ParameterError, \
    ProblemConstants, ProblemOracle
from blockbilevel.oracle import estimator_error_probe, exact_hypergradient
from blockbilevel.problems import make_quadratic, make_synthetic_binary, \
    make_hyperweight
from blockbilevel.rng import ITER_LANE, substream
from blockbilevel.solver_v2 import compute_G_pair_v2, init_v2, phi_grad, \
    projection_radius, run_v2, step_v2
from blockbilevel._runner import draw_batches
from blockbilevel.problem import block_sample

from conftest import stable_params


class DiagQuadOracle(ProblemOracle):
    """One block, fixed diagonal lower Hessian and constant upper gradient;
    lets subproblem formulas be checked against hand values."""

    has_dense_hessian = True

    def __init__(self, diag, fy):
        self.diag = np.asarray(diag, float)
        self.fy = np.asarray(fy, float)
        self.m = 1
        self.d_x = 2
        self.constants = ProblemConstants(lam=float(self.diag.min()),
                                          L_g=float(self.diag.max()),
                                          sigma=0.0, C_fy=10.0)

    def d_y(self, i):
        return self.diag.shape[0]

    def sample_upper_batch(self, i, size, rng):
        return Batch(np.zeros(size, dtype=np.int64))

    sample_lower_batch = sample_upper_batch

    def full_upper_batch(self, i):
        return Batch(np.zeros(1, dtype=np.int64))

    full_lower_batch = full_upper_batch

    def grad_x_f(self, i, x, y_i, batch):
        return np.zeros(2)

    def grad_y_f(self, i, x, y_i, batch):
        return self.fy.copy()

    def grad_y_g(self, i, x, y_i, batch):
        return self.diag * y_i

    def jacobian_xy_g_vec(self, i, x, y_i, batch, w):
        return np.zeros(2)

    def hessian_yy_g(self, i, x, y_i, batch):
        return np.diag(self.diag)

    def hessian_yy_g_vec(self, i, x, y_i, batch, v):
        return self.diag * v

    def upper_value(self, i, x, y_i, batch):
        return float(self.fy @ y_i)

    def lower_value(self, i, x, y_i, batch):
        return float(0.5 * y_i @ (self.diag * y_i))


class TestPhiGrad:
    def test_hand_values(self):
        prob = DiagQuadOracle(diag=[2.0, 4.0], fy=[2.0, 4.0])
        b = prob.full_lower_batch(0)
        out = phi_grad(prob, 0, np.zeros(2), np.zeros(2), np.zeros(2), b, b)
        assert np.allclose(out, [-2.0, -4.0], atol=0)
        out = phi_grad(prob, 0, np.ones(2), np.zeros(2), np.zeros(2), b, b)
        assert np.allclose(out, [0.0, 0.0], atol=0)

    def test_vanishes_at_exact_solution(self, quad_noiseless):
        prob = quad_noiseless
        rng = substream(0, 0, 0)
        x = rng.standard_normal(prob.d_x)
        y = prob.exact_lower(x, 0)
        lo, up = prob.full_lower_batch(0), prob.full_upper_batch(0)
        H = prob.hessian_yy_g(0, x, y, lo)
        v_star = np.linalg.solve(H, prob.grad_y_f(0, x, y, up))
        out = phi_grad(prob, 0, v_star, x, y, up, lo)
        assert np.linalg.norm(out) <= 1e-10


class TestVTarget:
    def test_argmin_equals_linear_solve(self, quad_small):
        # minimizing the quadratic subproblem and solving against the
        # Hessian agree
        import scipy.optimize
        prob = quad_small
        rng = substream(1, 0, 0)
        x = rng.standard_normal(prob.d_x)
        y = rng.standard_normal(prob.d_y(0))
        lo, up = prob.full_lower_batch(0), prob.full_upper_batch(0)
        H = prob.hessian_yy_g(0, x, y, lo)
        fy = prob.grad_y_f(0, x, y, up)
        v_solve = np.linalg.solve(H, fy)
        res = scipy.optimize.minimize(
            lambda v: 0.5 * v @ (H @ v) - v @ fy, np.zeros(len(fy)),
            jac=lambda v: H @ v - fy, method="BFGS",
            options={"gtol": 1e-12})
        assert np.linalg.norm(res.x - v_solve) <= 1e-8 * max(
            1.0, np.linalg.norm(v_solve))


class TestUUpdate:
    def test_fixed_point(self, quad_noiseless):
        prob = quad_noiseless
        params = stable_params(prob, I=prob.m)
        state = init_v2(prob, params)
        state.iter = 1
        u_before = [state.u[i].copy() for i in range(prob.m)]
        sampled = np.arange(prob.m)
        batches = {i: (prob.full_upper_batch(i), prob.full_lower_batch(i))
                   for i in range(prob.m)}
        from blockbilevel.solver_v2 import u_update
        u_update(state, prob, sampled, batches)
        for i in range(prob.m):
            assert np.allclose(state.u[i], u_before[i], atol=1e-14)

    def test_full_replacement(self, quad_noiseless):
        # alpha_bar = 1 with gamma forced to zero: tracker becomes fresh eval
        prob = quad_noiseless
        params = stable_params(prob, I=prob.m, alpha_bar=1.0,
                               gamma_override=0.0)
        state = init_v2(prob, params)
        for i in range(prob.m):
            state.u.values[i] = 123.0 + np.zeros(prob.d_y(i))
        sampled = np.arange(prob.m)
        batches = {i: (prob.full_upper_batch(i), prob.full_lower_batch(i))
                   for i in range(prob.m)}
        from blockbilevel.solver_v2 import u_update
        u_update(state, prob, sampled, batches)
        for i in range(prob.m):
            fresh = phi_grad(prob, i, state.v[i], state.x, state.y[i],
                             batches[i][0], batches[i][1])
            assert np.array_equal(state.u[i], fresh)


class TestComputeGPairV2:
    def test_collapses_to_exact_gradient(self, quad_noiseless):
        prob = quad_noiseless
        params = stable_params(prob, I=prob.m)
        state = init_v2(prob, params, x0=np.ones(prob.d_x))
        sampled = np.arange(prob.m)
        batches = {i: (prob.full_upper_batch(i), prob.full_lower_batch(i))
                   for i in range(prob.m)}
        G, G_tilde = compute_G_pair_v2(state, prob, sampled, batches)
        ref = exact_hypergradient(prob, state.x)
        assert np.linalg.norm(G - ref) <= 1e-10
        assert np.array_equal(G, G_tilde)

    def test_first_iteration_pair_identical_bitwise(self, quad_small):
        prob = quad_small
        params = stable_params(prob, I=4, init_batch=16)
        state = init_v2(prob, params)
        rng_it = substream(params.seed, 1, ITER_LANE)
        sampled = block_sample(prob.m, params.I, rng_it)
        batches = draw_batches(prob, sampled, params.B, params.seed, 1)
        G, G_tilde = compute_G_pair_v2(state, prob, sampled, batches)
        assert np.array_equal(G, G_tilde)


class TestStepV2:
    def test_deterministic_fixed_point(self, quad_noiseless):
        prob = quad_noiseless
        x0 = np.random.default_rng(1).standard_normal(prob.d_x)
        params = stable_params(prob, I=prob.m, B=4, T=100, eta=0.0, seed=7)
        state = init_v2(prob, params, x0=x0)
        ref = exact_hypergradient(prob, x0)
        worst = 0.0
        for _ in range(100):
            step_v2(state, prob, params)
            worst = max(worst, float(np.linalg.norm(state.z - ref)))
        assert worst <= 1e-10

    def test_frozen_upper_subproblem_iterates_converge(self, quad_small):
        # eta = 0 and converged y: v approaches the Hessian-inverse product
        # linearly; compare against a direct solve
        prob = quad_small
        x0 = np.ones(prob.d_x)
        params = stable_params(prob, I=prob.m, B=64, T=300, eta=0.0,
                               tau_t=0.3, tau_bar_t=0.3, seed=5)
        res = run_v2(prob, params, x0=x0, measure_time=False)
        state = res.state
        for i in range(prob.m):
            lo = prob.full_lower_batch(i)
            up = prob.full_upper_batch(i)
            H = prob.hessian_yy_g(i, x0, state.y[i], lo)
            v_star = np.linalg.solve(H, prob.grad_y_f(i, x0, state.y[i], up))
            assert np.linalg.norm(state.v[i] - v_star) <= 5e-2

    def test_sample_budget_matches_v1(self, quad_small):
        from blockbilevel.solver_v1 import run_v1
        params = stable_params(quad_small, I=3, B=8, T=20, init_batch=16,
                               init_steps=2)
        r1 = run_v1(quad_small, params, measure_time=False)
        r2 = run_v2(quad_small, params, measure_time=False)
        inc1 = r1.trace.final().samples - r1.trace[0].samples
        inc2 = r2.trace.final().samples - r2.trace[0].samples
        assert inc1 == inc2 == 20 * 2 * 3 * 8

    def test_ball_invariant_every_iteration(self, quad_small):
        prob = quad_small
        params = stable_params(prob, I=2, B=2, T=120, tau_bar_t=1.5, seed=3)
        radius = projection_radius(prob, params)
        worst = [0.0]

        def cb(state, row):
            worst[0] = max(worst[0],
                           max(float(np.linalg.norm(state.materialized_v()[i]))
                               for i in range(prob.m)))

        run_v2(prob, params, eval_every=1, callbacks=(cb,),
               measure_time=False)
        assert worst[0] <= radius + 1e-12


class TestEagerDelayedEquivalence:
    def test_identical_trajectories(self, quad_small):
        params = stable_params(quad_small, T=50, I=3, B=4, seed=99,
                               lazy_updates=True)
        eager = dataclasses.replace(params, lazy_updates=False)
        r_lazy = run_v2(quad_small, params, measure_time=False)
        r_eager = run_v2(quad_small, eager, measure_time=False)
        assert np.linalg.norm(r_lazy.state.x - r_eager.state.x) <= 1e-12
        assert (r_lazy.state.v - r_eager.state.v).norm() <= 1e-12
        assert (r_lazy.state.y - r_eager.state.y).norm() <= 1e-12


class TestInitV2:
    def test_exact_initialization_on_full_batch(self, quad_small):
        prob = quad_small
        params = stable_params(prob, init_batch=None, init_steps=8)
        x0 = np.random.default_rng(0).standard_normal(prob.d_x)
        state = init_v2(prob, params, x0=x0)
        for i in range(prob.m):
            lo, up = prob.full_lower_batch(i), prob.full_upper_batch(i)
            H = prob.hessian_yy_g(i, x0, state.y[i], lo)
            v_star = np.linalg.solve(H, prob.grad_y_f(i, x0, state.y[i], up))
            assert np.linalg.norm(state.v[i] - v_star) <= 1e-8
            assert np.linalg.norm(state.u[i]) <= 1e-8
            assert np.linalg.norm(state.v[i]) <= state.radius + 1e-12
        assert np.linalg.norm(
            state.z - exact_hypergradient(prob, x0)) <= 1e-10

    def test_warm_start_quality_monotone_in_steps(self, hyperweight_tiny):
        # subproblem warm-start error decreases with more projected steps
        prob = hyperweight_tiny
        x0 = np.zeros(prob.d_x)
        from blockbilevel.oracle import exact_lower_solve
        for seed in range(3):
            errs = []
            for steps in (3, 60):
                params = stable_params(
                    prob, I=2, init_batch=None, init_steps=steps, seed=seed,
                    tau=2.0 / (3.0 * prob.constants.L_g))
                state = init_v2(prob, params)
                err = 0.0
                for i in range(prob.m):
                    lo = prob.full_lower_batch(i)
                    up = prob.full_upper_batch(i)
                    H = prob.hessian_yy_g(i, x0, state.y[i], lo)
                    v_star = np.linalg.solve(
                        H, prob.grad_y_f(0, x0, state.y[i], up))
                    err += float(np.sum((state.v[i] - v_star) ** 2))
                errs.append(err)
            assert errs[1] <= errs[0], f"seed {seed}: {errs}"

    def test_requires_tau_bar(self, quad_small):
        params = stable_params(quad_small, tau_bar_t=None)
        with pytest.raises(ParameterError, match="tau_bar_t"):
            init_v2(quad_small, params)

    def test_radius_override_required_without_cfy(self):
        prob = DiagQuadOracle(diag=[2.0, 4.0], fy=[1.0, 1.0])
        prob.constants.C_fy = None
        params = stable_params(prob, I=1)
        with pytest.raises(ParameterError, match="radius"):
            init_v2(prob, params)
        params = dataclasses.replace(params, radius_override=3.0)
        state = init_v2(prob, params)
        assert state.radius == 3.0


class TestStructure:
    def test_never_materializes_dense_hessian(self):
        ds = make_synthetic_binary(n_train=120, n_val=60, n_test=0, d=40,
                                   seed=4)
        prob = CountingOracle(make_hyperweight(ds, m=4, lambda_reg=1e-2,
                                               dense_hessian=False))
        params = stable_params(prob, I=2, B=8, T=50, init_batch=16,
                               init_steps=3,
                               tau=2.0 / (3.0 * prob.constants.L_g),
                               tau_t=0.05, eta=0.001, tau_bar_t=0.05)
        run_v2(prob, params, measure_time=False)
        assert prob.counts["hessian_yy_g"] == 0
        assert prob.counts["hessian_yy_g_vec"] > 0

    def test_zero_iterations(self, quad_small):
        res = run_v2(quad_small, stable_params(quad_small, T=0),
                     measure_time=False)
        assert len(res.trace) == 1 and res.trace[0].iter == 0
