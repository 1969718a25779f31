"""Reference computations: exact lower solutions, exact hypergradients,
finite differences, and estimator-error probes.

Everything here evaluates deterministic full-batch quantities and shares no
code path with the solvers' stochastic estimates, so agreement between the
two is evidence rather than tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import OracleError
from .problem import ProblemOracle

_LOWER_SOLVE_CAP = 200_000


def finite_difference_grad(F, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a deterministic scalar function."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (F(x + e) - F(x - e)) / (2.0 * h)
    return out


def exact_lower_solve(problem: ProblemOracle, x: np.ndarray, i: int,
                      tol: float = 1e-10) -> np.ndarray:
    """Solve the i-th lower problem at x to gradient norm <= tol.

    Uses the problem's closed form when it provides one (an ``exact_lower``
    method), otherwise deterministic full-batch gradient descent with step
    1/L_g.
    """
    closed = getattr(problem, "exact_lower", None)
    if closed is not None:
        return np.asarray(closed(x, i), dtype=np.float64)
    batch = problem.full_lower_batch(i)
    L = problem.constants.L_g
    y = np.zeros(problem.d_y(i))
    for _ in range(_LOWER_SOLVE_CAP):
        grad = problem.grad_y_g(i, x, y, batch)
        res = float(np.linalg.norm(grad))
        if res <= tol:
            return y
        y = y - grad / L
    raise OracleError(
        f"lower solve for block {i} did not reach tol={tol} within "
        f"{_LOWER_SOLVE_CAP} steps (residual {res:.3e})")


def _solve_hessian(problem, i, x, y, batch, rhs, method: str):
    if method == "dense":
        H = problem.hessian_yy_g(i, x, y, batch)
        return np.linalg.solve(H, rhs)
    if method == "cg":
        d = problem.d_y(i)
        op = spla.LinearOperator(
            (d, d), matvec=lambda v: problem.hessian_yy_g_vec(i, x, y, batch, v))
        sol, info = spla.cg(op, rhs, rtol=1e-12, atol=0.0, maxiter=20 * d)
        if info != 0:
            raise OracleError(f"CG solve failed for block {i} (info={info})")
        return sol
    raise ValueError(f"unknown solve method {method!r}")


def exact_hypergradient(problem: ProblemOracle, x: np.ndarray,
                        solver: str = "auto",
                        lower_tol: float = 1e-12) -> np.ndarray:
    """Deterministic total gradient of the upper objective at x.

    Per block: grad_x f_i minus the mixed-derivative action applied to the
    Hessian-inverse of grad_y f_i, all evaluated at the exact lower solution.
    The inverse is realized as a linear solve (dense when the problem offers
    a dense Hessian, conjugate gradients otherwise).
    """
    x = np.asarray(x, dtype=np.float64)
    if solver == "auto":
        solver = "dense" if problem.has_dense_hessian else "cg"
    total = np.zeros(problem.d_x)
    for i in range(problem.m):
        y = exact_lower_solve(problem, x, i, tol=lower_tol)
        up = problem.full_upper_batch(i)
        lo = problem.full_lower_batch(i)
        fy = problem.grad_y_f(i, x, y, up)
        w = _solve_hessian(problem, i, x, y, lo, fy, solver)
        total += problem.grad_x_f(i, x, y, up)
        total -= problem.jacobian_xy_g_vec(i, x, y, lo, w)
    return total / problem.m


def upper_objective(problem: ProblemOracle, x: np.ndarray,
                    lower_tol: float = 1e-12) -> float:
    """Deterministic upper objective at x, through exact lower solutions."""
    total = 0.0
    for i in range(problem.m):
        y = exact_lower_solve(problem, x, i, tol=lower_tol)
        total += problem.upper_value(i, x, y, problem.full_upper_batch(i))
    return total / problem.m


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    detail: str = ""


def _rel_err(got: np.ndarray, want: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(want)), 1e-8)
    return float(np.linalg.norm(np.asarray(got) - np.asarray(want))) / scale


def oracle_consistency_suite(problem: ProblemOracle, seed: int = 0,
                             n_blocks: int = 3, rtol_fd: float = 1e-4,
                             tol_unbiased: float = 1e-12,
                             h: float = 1e-5) -> list[CheckResult]:
    """Generic checks every built-in instance must pass.

    Unbiasedness: averaging each stochastic oracle's single-sample
    evaluations over the full dataset reproduces the full-batch value.
    Finite differences: every first/second-order oracle matches central
    differences of the corresponding value function, both on the full
    batch and on a fixed random mini-batch.
    """
    from .problem import Batch  # local import to keep module load light

    rng = np.random.default_rng(seed)
    blocks = sorted(rng.choice(problem.m, size=min(n_blocks, problem.m),
                               replace=False).tolist())
    results: list[CheckResult] = []

    def add(name, err, tol):
        results.append(CheckResult(name=name, passed=bool(err <= tol),
                                   error=err,
                                   detail=f"err={err:.3e} tol={tol:g}"))

    for i in blocks:
        d = problem.d_y(i)
        x = 0.5 * rng.standard_normal(problem.d_x)
        y = 0.5 * rng.standard_normal(d)
        v = rng.standard_normal(d)
        w = rng.standard_normal(d)
        full_lo = problem.full_lower_batch(i)
        full_up = problem.full_upper_batch(i)
        small_lo = problem.sample_lower_batch(i, 7, rng)
        small_up = problem.sample_upper_batch(i, 7, rng)

        # unbiasedness: single-sample average == full batch
        for name, batch_src, fn in (
                ("grad_y_g", full_lo,
                 lambda b: problem.grad_y_g(i, x, y, b)),
                ("grad_y_f", full_up,
                 lambda b: problem.grad_y_f(i, x, y, b)),
                ("hessian_yy_g_vec", full_lo,
                 lambda b: problem.hessian_yy_g_vec(i, x, y, b, v)),
                ("jacobian_xy_g_vec", full_lo,
                 lambda b: problem.jacobian_xy_g_vec(i, x, y, b, w))):
            singles = [fn(Batch(np.array([j])))
                       for j in batch_src.indices]
            err = _rel_err(np.mean(singles, axis=0), fn(batch_src))
            add(f"block{i}.unbiased.{name}", err, tol_unbiased)

        # finite differences against the value functions
        for tag, up, lo in (("full", full_up, full_lo),
                            ("batch", small_up, small_lo)):
            fd = finite_difference_grad(
                lambda yy: problem.lower_value(i, x, yy, lo), y, h=h)
            add(f"block{i}.fd.grad_y_g.{tag}",
                _rel_err(problem.grad_y_g(i, x, y, lo), fd), rtol_fd)

            fd = finite_difference_grad(
                lambda yy: problem.upper_value(i, x, yy, up), y, h=h)
            add(f"block{i}.fd.grad_y_f.{tag}",
                _rel_err(problem.grad_y_f(i, x, y, up), fd), rtol_fd)

            hv_fd = (problem.grad_y_g(i, x, y + h * v, lo)
                     - problem.grad_y_g(i, x, y - h * v, lo)) / (2 * h)
            add(f"block{i}.fd.hessian_yy_g_vec.{tag}",
                _rel_err(problem.hessian_yy_g_vec(i, x, y, lo, v), hv_fd),
                rtol_fd)

            jac_fd = finite_difference_grad(
                lambda xx: float(problem.grad_y_g(i, xx, y, lo) @ w), x, h=h)
            add(f"block{i}.fd.jacobian_xy_g_vec.{tag}",
                _rel_err(problem.jacobian_xy_g_vec(i, x, y, lo, w), jac_fd),
                rtol_fd)

        if problem.has_dense_hessian:
            H = problem.hessian_yy_g(i, x, y, full_lo)
            add(f"block{i}.hessian_symmetry",
                float(np.max(np.abs(H - H.T))), 0.0)
            add(f"block{i}.hessian_vs_vec",
                _rel_err(H @ v, problem.hessian_yy_g_vec(i, x, y, full_lo, v)),
                1e-10)
    return results


@dataclass
class ProbeResult:
    """Exact estimator errors of a solver state (appendix-style sums of
    squared per-block deviations)."""

    delta_y: float
    delta_s: float
    delta_H: float | None = None
    delta_v: float | None = None
    delta_u: float | None = None

    @property
    def delta_tracker(self) -> float:
        """Second-order tracker error: Hessian tracker for the dense-tracking
        solver, quadratic-subproblem solution tracker otherwise."""
        return self.delta_H if self.delta_H is not None else self.delta_v


def estimator_error_probe(state, problem: ProblemOracle,
                          lower_tol: float = 1e-12) -> ProbeResult:
    """Measure a state's tracking errors against deterministic references.

    Works for either solver state; lazily deferred per-block steps are
    materialized on a copy first, so the probe sees the values the
    estimators would use at the next sampling.
    """
    x = state.x
    y = state.materialized_y()
    dy = 0.0
    ds = 0.0
    for i in range(problem.m):
        y_star = exact_lower_solve(problem, x, i, tol=lower_tol)
        diff = y[i] - y_star
        dy += float(diff @ diff)
        s_err = state.s[i] - problem.grad_y_g(i, x, y[i],
                                              problem.full_lower_batch(i))
        ds += float(s_err @ s_err)

    dH = dv = du = None
    if hasattr(state, "H"):
        dH = 0.0
        for i in range(problem.m):
            lo = problem.full_lower_batch(i)
            H_err = state.H[i] - problem.hessian_yy_g(i, x, y[i], lo)
            dH += float(np.sum(H_err * H_err))
    if hasattr(state, "v"):
        v = state.materialized_v()
        dv = 0.0
        du = 0.0
        for i in range(problem.m):
            up = problem.full_upper_batch(i)
            lo = problem.full_lower_batch(i)
            fy = problem.grad_y_f(i, x, y[i], up)
            method = "dense" if problem.has_dense_hessian else "cg"
            v_star = _solve_hessian(problem, i, x, y[i], lo, fy, method)
            diff = v[i] - v_star
            dv += float(diff @ diff)
            u_err = (state.u[i]
                     - (problem.hessian_yy_g_vec(i, x, y[i], lo, v[i]) - fy))
            du += float(u_err @ u_err)
    return ProbeResult(delta_y=dy, delta_s=ds, delta_H=dH,
                       delta_v=dv, delta_u=du)
