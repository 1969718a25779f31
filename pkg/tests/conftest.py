import numpy as np
import pytest

from blockbilevel import HyperParams
from blockbilevel.problems import make_quadratic, make_synthetic_binary, \
    make_hyperweight


@pytest.fixture(scope="session")
def quad_small():
    """m=10, d_x=5, d_y=4, noisy; the workhorse instance."""
    return make_quadratic(m=10, d_x=5, d_y=4, noise_sigma=0.1, seed=3)


@pytest.fixture(scope="session")
def quad_noiseless():
    return make_quadratic(m=6, d_x=4, d_y=3, noise_sigma=0.0, seed=5)


@pytest.fixture(scope="session")
def hyperweight_tiny():
    """n=50, d=10, m=3: small enough for finite differences everywhere."""
    ds = make_synthetic_binary(n_train=50, n_val=40, n_test=0, d=10, seed=11)
    return make_hyperweight(ds, m=3, lambda_reg=5e-2, seed=12)


def stable_params(problem, **overrides) -> HyperParams:
    base = dict(I=min(3, problem.m), B=8, T=200, alpha=0.2, alpha_bar=0.2,
                beta=0.2, tau=2.0 / (3.0 * problem.constants.L_g), tau_t=0.2,
                eta=0.05, tau_bar_t=0.2, init_batch=None, init_steps=5,
                seed=42)
    base.update(overrides)
    return HyperParams(**base)
