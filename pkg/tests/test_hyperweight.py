import numpy as np
import pytest
import scipy.optimize
from scipy.special import expit

from blockbilevel import ParameterError
from blockbilevel.oracle import exact_lower_solve, finite_difference_grad, \
    oracle_consistency_suite
from blockbilevel.problems import HyperWeightMBBO, make_hyperweight, \
    make_synthetic_binary
from blockbilevel.rng import substream


def test_consistency_suite(hyperweight_tiny):
    bad = [r for r in oracle_consistency_suite(hyperweight_tiny, seed=1)
           if not r.passed]
    assert not bad, bad


def test_hessian_vector_matches_fd(hyperweight_tiny):
    prob = hyperweight_tiny
    rng = substream(4, 0, 0)
    x = rng.standard_normal(prob.d_x)
    w = 0.3 * rng.standard_normal(prob.d_y(0))
    v = rng.standard_normal(prob.d_y(0))
    batch = prob.sample_lower_batch(0, 16, rng)
    h = 1e-5
    fd = (prob.grad_y_g(0, x, w + h * v, batch)
          - prob.grad_y_g(0, x, w - h * v, batch)) / (2 * h)
    got = prob.hessian_yy_g_vec(0, x, w, batch, v)
    assert np.linalg.norm(got - fd) / np.linalg.norm(fd) <= 1e-6


def test_weight_gradient_matches_fd(hyperweight_tiny):
    # the p-derivative flows through the sigmoid weights only
    prob = hyperweight_tiny
    rng = substream(5, 0, 0)
    x = 0.5 * rng.standard_normal(prob.d_x)
    w = 0.3 * rng.standard_normal(prob.d_y(0))
    batch = prob.sample_lower_batch(0, 12, rng)
    fd = finite_difference_grad(
        lambda xx: prob.lower_value(0, xx, w, batch), x)
    got = prob.grad_x_g(0, x, w, batch)
    assert np.linalg.norm(got - fd) / max(np.linalg.norm(fd), 1e-12) <= 1e-6


def test_jacobian_action_matches_fd(hyperweight_tiny):
    prob = hyperweight_tiny
    rng = substream(6, 0, 0)
    x = 0.5 * rng.standard_normal(prob.d_x)
    w = 0.3 * rng.standard_normal(prob.d_y(1))
    vec = rng.standard_normal(prob.d_y(1))
    batch = prob.sample_lower_batch(1, 12, rng)
    fd = finite_difference_grad(
        lambda xx: float(prob.grad_y_g(1, xx, w, batch) @ vec), x)
    got = prob.jacobian_xy_g_vec(1, x, w, batch, vec)
    assert np.linalg.norm(got - fd) / np.linalg.norm(fd) <= 1e-6


def test_lower_hessian_strongly_convex(hyperweight_tiny):
    prob = hyperweight_tiny
    rng = substream(7, 0, 0)
    for i in range(prob.m):
        x = rng.standard_normal(prob.d_x)
        w = rng.standard_normal(prob.d_y(i))
        H = prob.hessian_yy_g(i, x, w, prob.sample_lower_batch(i, 8, rng))
        assert np.linalg.eigvalsh(H)[0] >= prob.lambda_reg - 1e-10


def test_pinned_weights_match_independent_solver():
    # p = 0 pins every weight at 1/2; with one unit-temperature block the
    # lower problem is a ridge logistic regression, solved independently
    ds = make_synthetic_binary(n_train=60, n_val=30, n_test=0, d=8, seed=21)
    prob = HyperWeightMBBO(ds, temps=[1.0], lambda_reg=5e-2)
    p = np.zeros(prob.d_x)
    w_ours = exact_lower_solve(prob, p, 0, tol=1e-11)

    X = prob.X_tr.toarray()
    y = prob.y_tr

    def objective(w):
        margins = y * (X @ w)
        return (0.5 * np.mean(np.logaddexp(0.0, -margins))
                + 0.5 * prob.lambda_reg * w @ w)

    res = scipy.optimize.minimize(objective, np.zeros(X.shape[1]),
                                  method="L-BFGS-B",
                                  options={"ftol": 1e-16, "gtol": 1e-12})
    assert res.success
    assert np.linalg.norm(w_ours - res.x) <= 1e-6


def test_temperatures_reproducible_and_in_range():
    ds = make_synthetic_binary(n_train=30, n_val=20, n_test=0, d=5, seed=2)
    a = make_hyperweight(ds, m=20, lambda_reg=1e-2, seed=5)
    b = make_hyperweight(ds, m=20, lambda_reg=1e-2, seed=5)
    assert np.array_equal(a.temps, b.temps)
    assert np.all((a.temps >= 1.0) & (a.temps < 11.0))


def test_dense_hessian_flag():
    ds = make_synthetic_binary(n_train=30, n_val=20, n_test=0, d=5, seed=2)
    prob = make_hyperweight(ds, m=2, lambda_reg=1e-2, dense_hessian=False)
    assert not prob.has_dense_hessian
    with pytest.raises(NotImplementedError):
        prob.hessian_yy_g(0, np.zeros(prob.d_x), np.zeros(prob.d_y(0)),
                          prob.full_lower_batch(0))


def test_empty_dataset_rejected():
    ds = make_synthetic_binary(n_train=30, n_val=20, n_test=0, d=5, seed=2)
    import dataclasses
    empty = dataclasses.replace(ds, train_idx=np.empty(0, np.int64))
    with pytest.raises(ParameterError):
        make_hyperweight(empty, m=2, lambda_reg=1e-2)


def test_accuracy_helper():
    ds = make_synthetic_binary(n_train=50, n_val=30, n_test=30, d=6, seed=9)
    prob = make_hyperweight(ds, m=1, lambda_reg=1e-2, seed=0)
    w = np.zeros(prob.d_y(0))
    acc = prob.accuracy(w, split="test")
    assert 0.0 <= acc <= 1.0
    with pytest.raises(ParameterError):
        prob.accuracy(w, split="nope")
