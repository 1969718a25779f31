"""Blockwise variance-reduced bilevel solver, matrix-free variant.

For high-dimensional lower problems, the dense per-block Hessian tracker is
replaced by per-block approximate solutions v_i of the quadratic
subproblem

    phi_i(v, x, y_i) = 0.5 v^T (d^2 g_i/dy^2) v - v^T grad_y f_i,

whose minimizer equals the Hessian-inverse-vector product appearing in the
overall gradient.  The solver tracks the subproblem gradients with a
per-block tracker u_i (evaluated through Hessian-vector products only) and
takes projected steps v_i <- Pi_V[v_i - tau_bar_t u_i] inside the ball of
radius V = C_fy/lam, which is known to contain every exact solution.  The
v step runs on all blocks each iteration (frozen u on unsampled blocks);
deferring unsampled blocks and replaying their steps at the next sampling
is equivalent and available as the default "lazy" mode.

Everything else (lower-variable steps, paired overall-gradient estimates,
momentum-corrected tracker z, two mini-batches per sampled block) mirrors
the dense-Hessian variant; no dense Hessian is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._runner import RunResult, draw_batches, run_loop
from .blocks import BlockVector
from .errors import InvariantViolation, ParameterError
from .estimators import MsvrTracker, ball_project, storm_update
from .hyperparams import HyperParams
from .oracle import estimator_error_probe, exact_hypergradient, upper_objective
from .problem import Batch, ProblemOracle, block_sample
from .rng import ITER_LANE, substream
from .solver_v1 import _tracker_gamma, lazy_y_catchup

V_SLACK = 1e-12


def projection_radius(problem: ProblemOracle, params: HyperParams) -> float:
    """Ball radius for the subproblem iterates: C_fy/lam, or the explicit
    override when the instance does not declare C_fy."""
    if params.radius_override is not None:
        return params.radius_override
    radius = problem.constants.v_radius
    if radius is None:
        raise ParameterError(
            "problem declares no C_fy; pass radius_override to bound the "
            "quadratic-subproblem iterates")
    return radius


def phi_grad(problem: ProblemOracle, i: int, v_i, x, y_i,
             upper_batch: Batch, lower_batch: Batch) -> np.ndarray:
    """Stochastic subproblem gradient (d^2 g_i/dy^2) v - grad_y f_i, using
    only a Hessian-vector action."""
    return (problem.hessian_yy_g_vec(i, x, y_i, lower_batch, v_i)
            - problem.grad_y_f(i, x, y_i, upper_batch))


@dataclass
class StateV2:
    x: np.ndarray
    x_prev: np.ndarray
    y: BlockVector
    y_prev: BlockVector
    v: BlockVector                  # subproblem iterates, inside the V-ball
    v_prev: BlockVector
    s: MsvrTracker                  # lower-gradient tracker
    u: MsvrTracker                  # subproblem-gradient tracker
    z: np.ndarray
    last_touched: np.ndarray        # per block: last iteration whose y step ran
    last_touched_v: np.ndarray      # same for the v step
    iter: int
    samples: int
    y_step: float
    v_step: float                   # tau_bar_t, frozen for the run
    radius: float

    def pending_steps(self, i: int) -> int:
        return int(self.iter - 1 - self.last_touched[i])

    def pending_v_steps(self, i: int) -> int:
        return int(self.iter - 1 - self.last_touched_v[i])

    def materialized_y(self) -> BlockVector:
        out = self.y.copy()
        for i in range(len(out)):
            k = self.pending_steps(i)
            if k > 0:
                out[i] = out[i] - k * self.y_step * self.s[i]
        return out

    def materialized_v(self) -> BlockVector:
        out = self.v.copy()
        for i in range(len(out)):
            vi = out[i]
            for _ in range(self.pending_v_steps(i)):
                vi = ball_project(vi - self.v_step * self.u[i], self.radius)
            out[i] = vi
        return out

    def flush_pending(self):
        for i in range(len(self.y)):
            k = self.pending_steps(i)
            if k > 0:
                self.y[i] = self.y[i] - k * self.y_step * self.s[i]
            self.last_touched[i] = self.iter - 1
            vi = self.v[i]
            for _ in range(self.pending_v_steps(i)):
                vi = ball_project(vi - self.v_step * self.u[i], self.radius)
            self.v[i] = vi
            self.last_touched_v[i] = self.iter - 1

    def clone_flushed(self) -> "StateV2":
        st = StateV2(
            x=self.x.copy(), x_prev=self.x_prev.copy(),
            y=self.y.copy(), y_prev=self.y_prev.copy(),
            v=self.v.copy(), v_prev=self.v_prev.copy(),
            s=self.s.copy(), u=self.u.copy(), z=self.z.copy(),
            last_touched=self.last_touched.copy(),
            last_touched_v=self.last_touched_v.copy(),
            iter=self.iter, samples=self.samples,
            y_step=self.y_step, v_step=self.v_step, radius=self.radius)
        st.flush_pending()
        return st

    def rebase(self, params: HyperParams) -> "StateV2":
        self.flush_pending()
        m = len(self.y)
        self.x_prev = self.x.copy()
        self.y_prev = self.y.copy()
        self.v_prev = self.v.copy()
        self.last_touched = np.ones(m, dtype=np.int64)
        self.last_touched_v = np.ones(m, dtype=np.int64)
        self.iter = 1
        self.y_step = params.tau * params.tau_t
        self.v_step = params.tau_bar_t
        self.s.alpha = params.alpha
        self.s.gamma = _tracker_gamma(m, params.I, params.alpha,
                                      params.gamma_override)
        self.u.alpha = params.alpha_bar
        self.u.gamma = _tracker_gamma(m, params.I, params.alpha_bar,
                                      params.gamma_override)
        return self

    def check_invariants(self):
        assert all(self.last_touched[i] <= self.iter
                   for i in range(len(self.y)))
        for i in range(len(self.v)):
            n = float(np.linalg.norm(self.v[i]))
            assert n <= self.radius + V_SLACK, (
                f"v block {i} norm {n} outside radius {self.radius}")


def lazy_v_catchup(state: StateV2, i: int):
    """Replay the deferred projected subproblem steps of block i.

    Projection does not commute with folding constant steps, so the K
    pending steps are replayed one by one with the frozen tracker value;
    this reproduces the all-block schedule bit for bit.
    """
    K = int(state.iter - state.last_touched_v[i])
    if K < 1:
        raise InvariantViolation(
            f"v catch-up for block {i} called with K={K} < 1")
    vi = state.v[i]
    for _ in range(K - 1):
        vi = ball_project(vi - state.v_step * state.u[i], state.radius)
    state.v_prev[i] = vi
    state.v[i] = ball_project(vi - state.v_step * state.u[i], state.radius)
    state.last_touched_v[i] = state.iter


def _apply_y_step(state: StateV2, params: HyperParams, sampled):
    t = state.iter
    if params.lazy_updates:
        for i in sampled:
            i = int(i)
            if t - state.last_touched[i] >= 1:
                lazy_y_catchup(state, i, params.tau, params.tau_t)
    else:
        if t > 1:
            step = params.tau * params.tau_t
            for i in range(len(state.y)):
                state.y_prev[i] = state.y[i]
                state.y[i] = state.y[i] - step * state.s[i]
        state.last_touched[:] = t


def _apply_v_step(state: StateV2, params: HyperParams, sampled):
    t = state.iter
    if params.lazy_updates:
        for i in sampled:
            i = int(i)
            if t - state.last_touched_v[i] >= 1:
                lazy_v_catchup(state, i)
    else:
        if t > 1:
            for i in range(len(state.v)):
                state.v_prev[i] = state.v[i]
                state.v[i] = ball_project(
                    state.v[i] - state.v_step * state.u[i], state.radius)
        state.last_touched_v[:] = t


def compute_G_pair_v2(state: StateV2, problem: ProblemOracle, sampled,
                      batches) -> tuple[np.ndarray, np.ndarray]:
    """Paired overall-gradient estimates using the subproblem iterates:
    the new point pairs with v_i at this iteration, the previous point
    with v_i of the previous iteration, on the same two batches."""
    G = np.zeros(problem.d_x)
    G_tilde = np.zeros(problem.d_x)
    for i in sampled:
        i = int(i)
        up, lo = batches[i]
        G += problem.grad_x_f(i, state.x, state.y[i], up)
        G -= problem.jacobian_xy_g_vec(i, state.x, state.y[i], lo, state.v[i])
        G_tilde += problem.grad_x_f(i, state.x_prev, state.y_prev[i], up)
        G_tilde -= problem.jacobian_xy_g_vec(i, state.x_prev, state.y_prev[i],
                                             lo, state.v_prev[i])
    k = len(sampled)
    return G / k, G_tilde / k


def u_update(state: StateV2, problem: ProblemOracle, sampled, batches):
    """Tracker update for the subproblem gradients of the sampled blocks.

    The old-point evaluation pairs the previous (v_i, y_i) with the
    *current* x and the same batches; unsampled blocks are untouched.
    """
    for i in sampled:
        i = int(i)
        up, lo = batches[i]
        new = phi_grad(problem, i, state.v[i], state.x, state.y[i], up, lo)
        old = phi_grad(problem, i, state.v_prev[i], state.x,
                       state.y_prev[i], up, lo)
        state.u.update_block(i, new, old)


def step_v2(state: StateV2, problem: ProblemOracle,
            params: HyperParams) -> StateV2:
    t = state.iter
    rng_it = substream(params.seed, t, ITER_LANE)
    sampled = block_sample(problem.m, params.I, rng_it)
    _apply_y_step(state, params, sampled)
    _apply_v_step(state, params, sampled)
    batches = draw_batches(problem, sampled, params.B, params.seed, t)

    G, G_tilde = compute_G_pair_v2(state, problem, sampled, batches)

    for i in sampled:
        i = int(i)
        _, lo = batches[i]
        g_new = problem.grad_y_g(i, state.x, state.y[i], lo)
        g_old = problem.grad_y_g(i, state.x_prev, state.y_prev[i], lo)
        state.s.update_block(i, g_new, g_old)
    u_update(state, problem, sampled, batches)

    state.z = storm_update(state.z, G, G_tilde, params.beta)
    state.x_prev = state.x
    state.x = state.x - params.eta * state.z
    state.samples += 2 * params.I * params.B
    state.iter = t + 1
    return state


def init_v2(problem: ProblemOracle, params: HyperParams,
            x0=None) -> StateV2:
    """Initial state: warm-started y_i, projected-gradient warm starts for
    the subproblem iterates, large-batch trackers, all-block z estimate."""
    params.validate(problem.m)
    if params.tau_bar_t is None:
        raise ParameterError("the matrix-free solver requires tau_bar_t")
    m = problem.m
    L_g = problem.constants.L_g
    radius = projection_radius(problem, params)
    x = (np.zeros(problem.d_x) if x0 is None
         else np.asarray(x0, dtype=np.float64).copy())
    dims = problem.y_dims()
    y = BlockVector.zeros(dims)
    v = BlockVector.zeros(dims)
    s_vals: list[np.ndarray] = []
    u_vals: list[np.ndarray] = []
    G0 = np.zeros(problem.d_x)
    samples = 0
    B0 = params.init_batch

    for i in range(m):
        rng = substream(params.seed, 0, i)

        def lower_batch():
            nonlocal samples
            b = (problem.full_lower_batch(i) if B0 is None
                 else problem.sample_lower_batch(i, B0, rng))
            samples += b.size
            return b

        def upper_batch():
            nonlocal samples
            b = (problem.full_upper_batch(i) if B0 is None
                 else problem.sample_upper_batch(i, B0, rng))
            samples += b.size
            return b

        yi = np.zeros(dims[i])
        for _ in range(params.init_steps):
            yi = yi - problem.grad_y_g(i, x, yi, lower_batch()) / L_g
        y[i] = yi
        vi = np.zeros(dims[i])
        for _ in range(params.init_steps):
            grad = phi_grad(problem, i, vi, x, yi, upper_batch(),
                            lower_batch())
            vi = ball_project(vi - grad / L_g, radius)
        v[i] = vi
        s_vals.append(problem.grad_y_g(i, x, yi, lower_batch()))
        u_vals.append(phi_grad(problem, i, vi, x, yi, upper_batch(),
                               lower_batch()))
        up = upper_batch()
        lo = lower_batch()
        G0 += problem.grad_x_f(i, x, yi, up)
        G0 -= problem.jacobian_xy_g_vec(i, x, yi, lo, vi)

    s = MsvrTracker(values=s_vals, alpha=params.alpha,
                    gamma=_tracker_gamma(m, params.I, params.alpha,
                                         params.gamma_override))
    u = MsvrTracker(values=u_vals, alpha=params.alpha_bar,
                    gamma=_tracker_gamma(m, params.I, params.alpha_bar,
                                         params.gamma_override))
    return StateV2(
        x=x, x_prev=x.copy(), y=y, y_prev=y.copy(), v=v, v_prev=v.copy(),
        s=s, u=u, z=G0 / m,
        last_touched=np.ones(m, dtype=np.int64),
        last_touched_v=np.ones(m, dtype=np.int64),
        iter=1, samples=samples,
        y_step=params.tau * params.tau_t, v_step=params.tau_bar_t,
        radius=radius)


def _diagnostics(state: StateV2, problem: ProblemOracle) -> dict:
    probe = estimator_error_probe(state, problem)
    grad = exact_hypergradient(problem, state.x)
    return {
        "exact_grad_norm": float(np.linalg.norm(grad)),
        "upper_loss": upper_objective(problem, state.x),
        "delta_y": probe.delta_y,
        "delta_tracker": probe.delta_tracker,
    }


def run_v2(problem: ProblemOracle, params: HyperParams, *, x0=None,
           state: StateV2 | None = None, eval_every: int = 0,
           exact_diagnostics: bool = False, return_iterate: str = "last",
           callbacks=(), measure_time: bool = True, stop_when=None) -> RunResult:
    if state is None:
        state = init_v2(problem, params, x0=x0)
    else:
        state.rebase(params)
    return run_loop(state, problem, params, step_v2, _diagnostics,
                    eval_every=eval_every, exact_diagnostics=exact_diagnostics,
                    return_iterate=return_iterate, callbacks=callbacks,
                    measure_time=measure_time, stop_when=stop_when)
