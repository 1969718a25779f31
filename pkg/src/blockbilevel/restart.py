"""Multi-stage restarting with geometrically shrinking targets.

Under gradient dominance mu (F - F*) <= ||grad F||^2, re-running the
solver in stages whose mixing coefficients, step sizes and lengths are
retuned to a halving error target epsilon_k = epsilon_1 / 2^(k-1) drives
the suboptimality down geometrically.  Stage k warm-starts from the state
returned by stage k-1 (a uniformly random iterate of that stage), with all
trackers carried over.

The guarantees fix only parameter orders; the named multipliers below pin
the constants.  Their defaults were calibrated once on the quadratic
testbed and are part of the repository's reproducibility contract.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import ParameterError
from .hyperparams import HyperParams, phi_grad_lipschitz, sampling_ratio
from .problem import ProblemConstants, ProblemOracle
from .rng import derive_seed
from .solver_v1 import run_v1
from .solver_v2 import run_v2
from .trace import Trace


@dataclass
class RestartMultipliers:
    """Named constants scaling the stage formulas (orders stay fixed)."""
    c_eps: float = 1.0    # scales the initial target epsilon_1
    c_mix: float = 1.0    # scales the mixing coefficients alpha/beta
    c_step: float = 1.0   # scales the step sizes tau_t, tau_bar_t, eta
    c_len: float = 4.0    # scales the stage lengths T_k
    eps1_floor: float = 1e-8  # clamp for degenerate (I=m, huge B) regimes


@dataclass
class Stage:
    eps: float
    hyper: HyperParams


@dataclass
class StageSchedule:
    mu: float
    variant: str
    eps1: float
    stages: list[Stage] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.stages)


def build_schedule(mu: float, eps_target: float, I: int, B: int, m: int,
                   constants: ProblemConstants, variant: str = "v1",
                   multipliers: RestartMultipliers | None = None,
                   seed: int = 0, init_batch: int | None = None,
                   init_steps: int = 50, lazy_updates: bool = True,
                   ) -> StageSchedule:
    """Stage parameters for a halving-target restart run.

    Per stage k (target eps_k = eps_1 / 2^(k-1)), the three mixing
    coefficients are set equal at order mu*eps_k/rho, the step sizes at
    order sqrt(alpha_k) * I/m, and the stage length at the largest of the
    reciprocal rates.  eps_1 itself has order rho/mu, clamped to a floor
    in degenerate regimes.
    """
    if mu <= 0:
        raise ParameterError(f"need mu > 0, got {mu}")
    if eps_target <= 0:
        raise ParameterError(f"need eps_target > 0, got {eps_target}")
    if variant not in ("v1", "v2"):
        raise ParameterError(f"variant must be 'v1' or 'v2', got {variant!r}")
    mult = multipliers or RestartMultipliers()
    rho = sampling_ratio(m, I, B)
    eps1 = mult.c_eps * rho / mu
    if eps1 < mult.eps1_floor:
        eps1 = mult.eps1_floor
    if eps_target >= eps1:
        warnings.warn(
            f"eps_target={eps_target} is no smaller than eps_1={eps1:.3g}; "
            "emitting a single stage", stacklevel=2)
        K = 1
    else:
        K = math.ceil(math.log2(eps1 / eps_target)) + 1

    lam, L_g = constants.lam, constants.L_g
    tau = 2.0 / (3.0 * L_g)
    if variant == "v2":
        L_phi = phi_grad_lipschitz(constants)
        tau_bar_cap = min(lam / (8.0 * L_phi**2), lam / 2.0, 1.0 / lam)

    stages: list[Stage] = []
    for k in range(1, K + 1):
        eps_k = eps1 / 2 ** (k - 1)
        a_k = min(0.5, mult.c_mix * mu * eps_k / rho)
        scale = math.sqrt(a_k) * I / m
        tau_t = mult.c_step * scale
        if variant == "v1":
            eta = mult.c_step * scale
            if constants.L_F is not None:
                eta = min(eta, 1.0 / (2.0 * constants.L_F))
            T_k = math.ceil(mult.c_len * max(1.0 / (mu * eta),
                                             1.0 / tau_t, 1.0 / a_k))
            tau_bar_t = None
        else:
            tau_bar_t = min(mult.c_step * scale, tau_bar_cap)
            tau_t = min(mult.c_step * scale, tau_bar_t)
            eta = min(mult.c_step * scale, math.sqrt(m) * tau_t,
                      math.sqrt(m) * tau_bar_t)
            if constants.L_F is not None:
                eta = min(eta, 1.0 / (2.0 * constants.L_F))
            T_k = math.ceil(mult.c_len * max(
                1.0 / (mu * eta), 1.0 / a_k, 1.0 / tau_t, 1.0 / tau_bar_t))
        hyper = HyperParams(
            I=I, B=B, T=T_k,
            alpha=a_k, alpha_bar=a_k, beta=a_k,
            tau=tau, tau_t=tau_t, eta=eta, tau_bar_t=tau_bar_t,
            init_batch=init_batch, init_steps=init_steps,
            lazy_updates=lazy_updates, seed=derive_seed(seed, k))
        hyper.validate(m, L_g=L_g, theory=True)
        stages.append(Stage(eps=eps_k, hyper=hyper))
    return StageSchedule(mu=mu, variant=variant, eps1=eps1, stages=stages)


def run_restarted(problem: ProblemOracle, schedule: StageSchedule, *,
                  x0=None, carry_trackers: bool = True, eval_every: int = 0,
                  exact_diagnostics: bool = False, measure_time: bool = True,
                  ) -> tuple[object, list[Trace]]:
    """Chain the stages, warm-starting each from the previous stage's
    random-iterate output.

    ``carry_trackers=False`` re-initializes every stage from scratch at the
    previous stage's upper iterate (ablation mode; pays the
    initialization samples again each stage).
    """
    if problem.constants.mu_pl is None:
        raise ParameterError(
            f"{type(problem).__name__} declares no gradient-dominance "
            "constant; restart mode requires one")
    run_fn = run_v1 if schedule.variant == "v1" else run_v2
    state = None
    traces: list[Trace] = []
    for stage in schedule.stages:
        if state is None:
            res = run_fn(problem, stage.hyper, x0=x0,
                         return_iterate="random", eval_every=eval_every,
                         exact_diagnostics=exact_diagnostics,
                         measure_time=measure_time)
        elif carry_trackers:
            res = run_fn(problem, stage.hyper, state=state,
                         return_iterate="random", eval_every=eval_every,
                         exact_diagnostics=exact_diagnostics,
                         measure_time=measure_time)
        else:
            res = run_fn(problem, stage.hyper, x0=state.x,
                         return_iterate="random", eval_every=eval_every,
                         exact_diagnostics=exact_diagnostics,
                         measure_time=measure_time)
        state = res.returned
        traces.append(res.trace)
    return state, traces
