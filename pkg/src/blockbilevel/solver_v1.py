"""Blockwise variance-reduced bilevel solver, dense-Hessian variant.

Per iteration the solver samples I of the m lower problems, draws two
mini-batches per sampled block, and maintains:

  * per-block trackers s_i of the lower gradients and H_i of the lower
    Hessians (the latter spectrally floored at lam after every update,
    so the positive-definite solve against H_i is always well posed);
  * a momentum-corrected tracker z of the overall gradient, fed by paired
    estimates G (new point, tracker value H_i before this iteration's
    update) and G_tilde (previous point, tracker value from the previous
    iteration) computed on the same two batches;
  * descent steps y_i <- y_i - tau*tau_t*s_i on the lower variables and
    x <- x - eta*z on the upper variable.

Lower-variable steps for unsampled blocks use a frozen tracker value, so
they can be deferred and folded in when the block is next sampled
("lazy" mode, the default).  Lazy and eager schedules produce the same
trajectories because unsampled blocks never enter any estimate until
resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._runner import RunResult, draw_batches, run_loop
from .blocks import BlockMatrix, BlockVector
from .errors import InvariantViolation, ParameterError
from .estimators import MsvrTracker, msvr_gamma, spectral_floor, storm_update
from .hyperparams import HyperParams
from .oracle import estimator_error_probe, exact_hypergradient, upper_objective
from .problem import ProblemOracle, block_sample
from .rng import ITER_LANE, substream

EIG_SLACK = 1e-10


def _tracker_gamma(m: int, I: int, alpha: float,
                   override: float | None) -> float:
    if override is not None:
        return override
    if alpha >= 1.0:
        raise ParameterError("alpha >= 1 has no defined correction "
                             "coefficient; set gamma_override explicitly")
    return msvr_gamma(m, I, alpha)


def _pd_solve(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve against a floored tracker block."""
    try:
        c = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise InvariantViolation(
            "positive-definite solve failed; the spectral floor should make "
            "this impossible") from exc
    return scipy.linalg.cho_solve(c, rhs, check_finite=False)


@dataclass
class StateV1:
    x: np.ndarray
    x_prev: np.ndarray
    y: BlockVector
    y_prev: BlockVector
    s: MsvrTracker                 # lower-gradient tracker
    H: MsvrTracker                 # lower-Hessian tracker, floored at lam
    H_pre: list[np.ndarray]        # per block: value before its last update
    H_upd_iter: np.ndarray         # per block: iteration of that update
    z: np.ndarray
    last_touched: np.ndarray       # per block: last iteration whose y step ran
    iter: int
    samples: int
    y_step: float                  # tau * tau_t, frozen for the run
    lam: float

    def hessian_for_gtilde(self, i: int, t: int) -> np.ndarray:
        """Tracker value of block i at iteration t-1 (pre-update value if the
        block was updated exactly at t-1, current value otherwise)."""
        if self.H_upd_iter[i] == t - 1:
            return self.H_pre[i]
        return self.H[i]

    def pending_steps(self, i: int) -> int:
        return int(self.iter - 1 - self.last_touched[i])

    def materialized_y(self) -> BlockVector:
        """Current y with deferred per-block steps applied (copy)."""
        out = self.y.copy()
        for i in range(len(out)):
            k = self.pending_steps(i)
            if k > 0:
                out[i] = out[i] - k * self.y_step * self.s[i]
        return out

    def flush_pending(self):
        for i in range(len(self.y)):
            k = self.pending_steps(i)
            if k > 0:
                self.y[i] = self.y[i] - k * self.y_step * self.s[i]
            self.last_touched[i] = self.iter - 1

    def clone_flushed(self) -> "StateV1":
        st = StateV1(
            x=self.x.copy(), x_prev=self.x_prev.copy(),
            y=self.y.copy(), y_prev=self.y_prev.copy(),
            s=self.s.copy(), H=self.H.copy(),
            H_pre=[h.copy() for h in self.H_pre],
            H_upd_iter=self.H_upd_iter.copy(),
            z=self.z.copy(), last_touched=self.last_touched.copy(),
            iter=self.iter, samples=self.samples,
            y_step=self.y_step, lam=self.lam)
        st.flush_pending()
        return st

    def rebase(self, params: HyperParams) -> "StateV1":
        """Reset iteration-local bookkeeping for a fresh run that warm-starts
        from this state's variables and trackers."""
        self.flush_pending()
        m = len(self.y)
        self.x_prev = self.x.copy()
        self.y_prev = self.y.copy()
        self.H_pre = [self.H[i].copy() for i in range(m)]
        self.H_upd_iter = np.zeros(m, dtype=np.int64)
        self.last_touched = np.ones(m, dtype=np.int64)
        self.iter = 1
        self.y_step = params.tau * params.tau_t
        self.s.alpha = params.alpha
        self.s.gamma = _tracker_gamma(m, params.I, params.alpha,
                                      params.gamma_override)
        self.H.alpha = params.alpha_bar
        self.H.gamma = _tracker_gamma(m, params.I, params.alpha_bar,
                                      params.gamma_override)
        return self

    def check_invariants(self):
        t = self.iter
        assert all(self.last_touched[i] <= t for i in range(len(self.y)))
        for i in range(len(self.y)):
            w = np.linalg.eigvalsh(self.H[i])
            assert w[0] >= self.lam - EIG_SLACK, (
                f"H block {i} min eigenvalue {w[0]} below floor {self.lam}")


def lazy_y_catchup(state: StateV1, i: int, tau: float, tau_t: float):
    """Fold the deferred lower-variable steps of block i, then take the
    current iteration's step.

    With K = iter - last_touched pending iterations, the previous-iterate
    value receives K-1 folded steps and the current value one more, all in
    the frozen tracker direction s_i (unchanged since the block was last
    sampled).
    """
    K = int(state.iter - state.last_touched[i])
    if K < 1:
        raise InvariantViolation(
            f"catch-up for block {i} called with K={K} < 1")
    step = tau * tau_t * state.s[i]
    state.y_prev[i] = state.y[i] - (K - 1) * step
    state.y[i] = state.y_prev[i] - step
    state.last_touched[i] = state.iter


def _apply_y_step(state: StateV1, params: HyperParams, sampled):
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


def compute_G_pair_v1(state: StateV1, problem: ProblemOracle, sampled,
                      batches) -> tuple[np.ndarray, np.ndarray]:
    """Paired overall-gradient estimates at the new and previous point.

    Must be called before this iteration's tracker updates: the new-point
    estimate uses the current tracker block H_i, the previous-point
    estimate the tracker value of the previous iteration, and both consume
    the same two mini-batches per block.
    """
    t = state.iter
    G = np.zeros(problem.d_x)
    G_tilde = np.zeros(problem.d_x)
    for i in sampled:
        i = int(i)
        up, lo = batches[i]
        y_new, y_old = state.y[i], state.y_prev[i]
        fy = problem.grad_y_f(i, state.x, y_new, up)
        w = _pd_solve(state.H[i], fy)
        G += problem.grad_x_f(i, state.x, y_new, up)
        G -= problem.jacobian_xy_g_vec(i, state.x, y_new, lo, w)

        fy_old = problem.grad_y_f(i, state.x_prev, y_old, up)
        w_old = _pd_solve(state.hessian_for_gtilde(i, t), fy_old)
        G_tilde += problem.grad_x_f(i, state.x_prev, y_old, up)
        G_tilde -= problem.jacobian_xy_g_vec(i, state.x_prev, y_old, lo, w_old)
    k = len(sampled)
    return G / k, G_tilde / k


def step_v1(state: StateV1, problem: ProblemOracle,
            params: HyperParams) -> StateV1:
    """One full iteration; see the module docstring for the update order."""
    t = state.iter
    rng_it = substream(params.seed, t, ITER_LANE)
    sampled = block_sample(problem.m, params.I, rng_it)
    _apply_y_step(state, params, sampled)
    batches = draw_batches(problem, sampled, params.B, params.seed, t)

    G, G_tilde = compute_G_pair_v1(state, problem, sampled, batches)

    for i in sampled:
        i = int(i)
        _, lo = batches[i]
        g_new = problem.grad_y_g(i, state.x, state.y[i], lo)
        g_old = problem.grad_y_g(i, state.x_prev, state.y_prev[i], lo)
        state.s.update_block(i, g_new, g_old)

        Hb_new = problem.hessian_yy_g(i, state.x, state.y[i], lo)
        Hb_old = problem.hessian_yy_g(i, state.x_prev, state.y_prev[i], lo)
        H_t = state.H[i]
        state.H.update_block(i, Hb_new, Hb_old)
        state.H_pre[i] = H_t
        state.H_upd_iter[i] = t

    state.z = storm_update(state.z, G, G_tilde, params.beta)
    state.x_prev = state.x
    state.x = state.x - params.eta * state.z
    state.samples += 2 * params.I * params.B
    state.iter = t + 1
    return state


def init_v1(problem: ProblemOracle, params: HyperParams,
            x0=None) -> StateV1:
    """Initial state: warm-started lower variables, large-batch trackers,
    and an all-block estimate of the overall gradient."""
    params.validate(problem.m)
    if not problem.has_dense_hessian:
        raise ParameterError(
            f"{type(problem).__name__} has no dense lower-level Hessian; "
            "use the matrix-free solver")
    m = problem.m
    lam = problem.constants.lam
    L_g = problem.constants.L_g
    x = (np.zeros(problem.d_x) if x0 is None
         else np.asarray(x0, dtype=np.float64).copy())
    dims = problem.y_dims()
    y = BlockVector.zeros(dims)
    s_vals: list[np.ndarray] = []
    H_vals: list[np.ndarray] = []
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
        s_vals.append(problem.grad_y_g(i, x, yi, lower_batch()))
        H_vals.append(spectral_floor(
            problem.hessian_yy_g(i, x, yi, lower_batch()), lam))
        up = upper_batch()
        lo = lower_batch()
        w = _pd_solve(H_vals[i], problem.grad_y_f(i, x, yi, up))
        G0 += problem.grad_x_f(i, x, yi, up)
        G0 -= problem.jacobian_xy_g_vec(i, x, yi, lo, w)

    floor = lambda X: spectral_floor(X, lam)
    s = MsvrTracker(values=s_vals, alpha=params.alpha,
                    gamma=_tracker_gamma(m, params.I, params.alpha,
                                         params.gamma_override))
    H = MsvrTracker(values=[h.copy() for h in H_vals], alpha=params.alpha_bar,
                    gamma=_tracker_gamma(m, params.I, params.alpha_bar,
                                         params.gamma_override),
                    projector=floor)
    return StateV1(
        x=x, x_prev=x.copy(), y=y, y_prev=y.copy(), s=s, H=H,
        H_pre=H_vals, H_upd_iter=np.zeros(m, dtype=np.int64),
        z=G0 / m, last_touched=np.ones(m, dtype=np.int64),
        iter=1, samples=samples, y_step=params.tau * params.tau_t, lam=lam)


def _diagnostics(state: StateV1, problem: ProblemOracle) -> dict:
    probe = estimator_error_probe(state, problem)
    grad = exact_hypergradient(problem, state.x)
    return {
        "exact_grad_norm": float(np.linalg.norm(grad)),
        "upper_loss": upper_objective(problem, state.x),
        "delta_y": probe.delta_y,
        "delta_tracker": probe.delta_tracker,
    }


def run_v1(problem: ProblemOracle, params: HyperParams, *, x0=None,
           state: StateV1 | None = None, eval_every: int = 0,
           exact_diagnostics: bool = False, return_iterate: str = "last",
           callbacks=(), measure_time: bool = True, stop_when=None) -> RunResult:
    """Run T iterations from a fresh or warm-started state."""
    if state is None:
        state = init_v1(problem, params, x0=x0)
    else:
        state.rebase(params)
    return run_loop(state, problem, params, step_v1, _diagnostics,
                    eval_every=eval_every, exact_diagnostics=exact_diagnostics,
                    return_iterate=return_iterate, callbacks=callbacks,
                    measure_time=measure_time, stop_when=stop_when)
