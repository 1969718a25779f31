"""Solver hyperparameters and their derivation from declared constants.

The convergence guarantees fix only the *orders* of the coefficients in
terms of a target accuracy eps and the sampling sizes (I, B); the
``theory_hyperparams`` builder realizes those orders with user-settable
multipliers (defaults 1.0), using the instance's declared constants:

    rho        = 1(I < m)/I + 1/B
    alpha      = min(1/2, c_mix * B * eps^2)
    alpha_bar  = beta = min(1/2, c_mix * eps^2 / rho)
    tau        = 2 / (3 L_g)
    tau_t      = c_step * sqrt(I/m) * eps / sqrt(rho)
    tau_bar_t  = min(same order, lam/(8 L_phi_v^2), lam/2, 1/lam)
    eta        = min(1/(2 L_F), c_step * (I/m) * eps / sqrt(rho))

with L_phi_v = sqrt(max(4 L_gyy^2 V^2 + 2 L_fy^2, 4 C_gyy_tilde^2)) and
V = C_fy / lam the quadratic-subproblem gradient's Lipschitz constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ParameterError
from .problem import ProblemConstants


@dataclass
class HyperParams:
    I: int
    B: int
    T: int
    alpha: float
    alpha_bar: float
    beta: float
    tau: float
    tau_t: float
    eta: float
    tau_bar_t: float | None = None       # only used by the matrix-free solver
    init_batch: int | None = None        # None = full data
    init_steps: int = 50
    lazy_updates: bool = True
    seed: int = 0
    gamma_override: float | None = None  # forces both correction coefficients
    radius_override: float | None = None  # projection radius when C_fy unknown

    def validate(self, m: int, L_g: float | None = None,
                 theory: bool = False) -> None:
        if not 1 <= self.I <= m:
            raise ParameterError(f"need 1 <= I <= m, got I={self.I}, m={m}")
        if self.B < 1:
            raise ParameterError(f"need B >= 1, got {self.B}")
        if self.T < 0:
            raise ParameterError(f"need T >= 0, got {self.T}")
        for name in ("alpha", "alpha_bar", "beta"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise ParameterError(f"need 0 < {name} <= 1, got {val}")
        for name in ("tau", "tau_t"):
            val = getattr(self, name)
            if val <= 0:
                raise ParameterError(f"need {name} > 0, got {val}")
        # eta = 0 freezes the upper iterate, a legitimate diagnostic mode
        if self.eta < 0:
            raise ParameterError(f"need eta >= 0, got {self.eta}")
        if self.tau_bar_t is not None and self.tau_bar_t <= 0:
            raise ParameterError(f"need tau_bar_t > 0, got {self.tau_bar_t}")
        if self.init_batch is not None and self.init_batch < 1:
            raise ParameterError(f"need init_batch >= 1, got {self.init_batch}")
        if self.gamma_override is not None and self.gamma_override < 0:
            raise ParameterError("gamma_override must be nonnegative")
        if theory:
            if L_g is None:
                raise ParameterError("theory validation requires L_g")
            cap = 2.0 / (3.0 * L_g)
            if self.tau > cap + 1e-12:
                raise ParameterError(
                    f"tau={self.tau} exceeds the stability cap "
                    f"2/(3 L_g)={cap:.6g}")

    def with_seed(self, seed: int) -> "HyperParams":
        return replace(self, seed=seed)


def phi_grad_lipschitz(constants: ProblemConstants,
                       radius: float | None = None) -> float:
    """Lipschitz constant of the quadratic-subproblem stochastic gradient."""
    V = radius if radius is not None else constants.v_radius
    if V is None:
        raise ParameterError("need C_fy (or an explicit radius) to bound the "
                             "quadratic-subproblem gradient")
    if constants.L_gyy is None or constants.L_fy is None:
        raise ParameterError("need L_gyy and L_fy declared for the "
                             "quadratic-subproblem Lipschitz constant")
    if constants.C_gyy_tilde is None:
        raise ParameterError("need C_gyy_tilde declared")
    return math.sqrt(max(4.0 * constants.L_gyy**2 * V**2
                         + 2.0 * constants.L_fy**2,
                         4.0 * constants.C_gyy_tilde**2))


def sampling_ratio(m: int, I: int, B: int) -> float:
    """rho = 1(I < m)/I + 1/B, the variance scale of one iteration."""
    return (1.0 / I if I < m else 0.0) + 1.0 / B


def theory_hyperparams(constants: ProblemConstants, m: int, I: int, B: int,
                       eps: float, T: int, *, variant: str = "v1",
                       c_step: float = 1.0, c_mix: float = 1.0,
                       init_batch: int | None = None, init_steps: int = 50,
                       seed: int = 0, lazy_updates: bool = True) -> HyperParams:
    """Coefficients at their guaranteed orders for a target accuracy eps."""
    if eps <= 0:
        raise ParameterError(f"need eps > 0, got {eps}")
    if variant not in ("v1", "v2"):
        raise ParameterError(f"variant must be 'v1' or 'v2', got {variant!r}")
    rho = sampling_ratio(m, I, B)
    alpha = min(0.5, c_mix * B * eps**2)
    mixed = min(0.5, c_mix * eps**2 / rho)
    tau_t = c_step * math.sqrt(I / m) * eps / math.sqrt(rho)
    eta = c_step * (I / m) * eps / math.sqrt(rho)
    if constants.L_F is not None:
        eta = min(eta, 1.0 / (2.0 * constants.L_F))
    tau_bar_t = None
    if variant == "v2":
        lam = constants.lam
        L_phi = phi_grad_lipschitz(constants)
        tau_bar_t = min(tau_t, lam / (8.0 * L_phi**2), lam / 2.0, 1.0 / lam)
    if init_batch is None:
        init_batch = max(1, math.ceil(1.0 / eps))
    hp = HyperParams(
        I=I, B=B, T=T,
        alpha=alpha, alpha_bar=mixed, beta=mixed,
        tau=2.0 / (3.0 * constants.L_g), tau_t=tau_t, eta=eta,
        tau_bar_t=tau_bar_t,
        init_batch=init_batch, init_steps=init_steps,
        seed=seed, lazy_updates=lazy_updates,
    )
    hp.validate(m, L_g=constants.L_g, theory=True)
    return hp
