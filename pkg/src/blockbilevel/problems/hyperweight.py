"""Data-reweighting bilevel problem with multi-temperature logistic losses.

The upper variable p assigns each training row j a weight sigmoid(p_j) in
(0,1).  Block i trains a linear model w_i under the tempered logistic loss

    L_T(w; x, y) = log(1 + exp(-y (w . x) / T)),

minimizing the sigmoid-weighted empirical risk plus a ridge term
(lam/2)||w||^2, which makes every lower problem lam-strongly convex.  The
upper objective averages the same tempered loss of w_i(p) over a clean
validation set.  Temperatures are drawn once at construction and stored,
so instances are reproducible.

The intercept is folded into w through an appended constant feature.  All
oracles are analytic: logistic curvature gives diagonal-weighted Gram
forms for the Hessian (as dense matrix or as matrix-free vector action),
and the mixed second derivative with respect to (p_j, w) is nonzero only
for rows j in the drawn batch, so its vector action returns a sparse
pattern inside a dense d_x vector without materializing anything.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..errors import ParameterError
from ..problem import Batch, ProblemConstants, ProblemOracle
from .datasets import Dataset


def _with_intercept(X: sp.csr_matrix) -> sp.csr_matrix:
    ones = np.ones((X.shape[0], 1))
    return sp.hstack([X, sp.csr_matrix(ones)], format="csr")


class HyperWeightMBBO(ProblemOracle):
    """m tempered-logistic lower problems sharing one weight vector p."""

    def __init__(self, dataset: Dataset, temps, lambda_reg: float,
                 dense_hessian: bool = True):
        if lambda_reg <= 0:
            raise ParameterError(
                f"lambda_reg must be positive (it is the strong-convexity "
                f"constant), got {lambda_reg}")
        if len(dataset.train_idx) == 0 or len(dataset.val_idx) == 0:
            raise ParameterError("dataset needs nonempty train and val splits")
        self.temps = np.asarray(temps, dtype=np.float64)
        if self.temps.ndim != 1 or np.any(self.temps <= 0):
            raise ParameterError("temps must be a 1-D array of positive values")
        self.lambda_reg = float(lambda_reg)
        self.dataset = dataset
        self.has_dense_hessian = bool(dense_hessian)

        X = _with_intercept(dataset.features)
        self.X_tr = X[dataset.train_idx]
        self.y_tr = dataset.labels[dataset.train_idx]
        self.X_val = X[dataset.val_idx]
        self.y_val = dataset.labels[dataset.val_idx]
        self.X_test = X[dataset.test_idx] if len(dataset.test_idx) else None
        self.y_test = (dataset.labels[dataset.test_idx]
                       if len(dataset.test_idx) else None)

        self.m = len(self.temps)
        self.n_train = self.X_tr.shape[0]
        self.d_x = self.n_train
        self._d_w = self.X_tr.shape[1]

        row_norms_tr = np.sqrt(np.asarray(
            self.X_tr.multiply(self.X_tr).sum(axis=1)).ravel())
        row_norms_val = np.sqrt(np.asarray(
            self.X_val.multiply(self.X_val).sum(axis=1)).ravel())
        R = float(max(row_norms_tr.max(), row_norms_val.max()))
        t_min = float(self.temps.min())
        curv = R**2 / (4.0 * t_min**2)
        self.constants = ProblemConstants(
            lam=self.lambda_reg,
            L_g=self.lambda_reg + curv,
            sigma=2.0 * max(R / t_min, curv),
            C_fy=R / t_min,
            C_gyy_tilde=self.lambda_reg + curv,
            L_fy=curv,
            L_gyy=max(R**3 / (4.0 * t_min**3), curv),
        )

    # --- structure ------------------------------------------------------
    def d_y(self, i: int) -> int:
        return self._d_w

    # --- sampling -------------------------------------------------------
    def sample_upper_batch(self, i, size, rng) -> Batch:
        return Batch(rng.integers(0, self.X_val.shape[0], size=size))

    def sample_lower_batch(self, i, size, rng) -> Batch:
        return Batch(rng.integers(0, self.n_train, size=size))

    def full_upper_batch(self, i) -> Batch:
        return Batch(np.arange(self.X_val.shape[0]))

    def full_lower_batch(self, i) -> Batch:
        return Batch(np.arange(self.n_train))

    # --- loss pieces -----------------------------------------------------
    def _margins(self, X, y, w, tau):
        return y * (X @ w) / tau

    # --- upper oracles ---------------------------------------------------
    def grad_x_f(self, i, x, y_i, batch):
        return np.zeros(self.d_x)

    def grad_y_f(self, i, x, y_i, batch):
        idx = batch.indices
        Xb, yb = self.X_val[idx], self.y_val[idx]
        tau = self.temps[i]
        z = self._margins(Xb, yb, y_i, tau)
        coef = -expit(-z) * yb / tau
        return np.asarray(Xb.T @ coef).ravel() / len(idx)

    def upper_value(self, i, x, y_i, batch):
        idx = batch.indices
        z = self._margins(self.X_val[idx], self.y_val[idx], y_i, self.temps[i])
        return float(np.mean(np.logaddexp(0.0, -z)))

    # --- lower oracles ---------------------------------------------------
    def grad_y_g(self, i, x, y_i, batch):
        idx = batch.indices
        Xb, yb = self.X_tr[idx], self.y_tr[idx]
        tau = self.temps[i]
        z = self._margins(Xb, yb, y_i, tau)
        coef = expit(x[idx]) * (-expit(-z)) * yb / tau
        out = np.asarray(Xb.T @ coef).ravel() / len(idx)
        return out + self.lambda_reg * y_i

    def hessian_yy_g_vec(self, i, x, y_i, batch, v):
        idx = batch.indices
        Xb, yb = self.X_tr[idx], self.y_tr[idx]
        tau = self.temps[i]
        z = self._margins(Xb, yb, y_i, tau)
        coef = expit(x[idx]) * expit(z) * expit(-z) / tau**2
        t = np.asarray(Xb @ v).ravel()
        out = np.asarray(Xb.T @ (coef * t)).ravel() / len(idx)
        return out + self.lambda_reg * v

    def hessian_yy_g(self, i, x, y_i, batch):
        if not self.has_dense_hessian:
            raise NotImplementedError(
                "instance constructed with dense_hessian=False")
        idx = batch.indices
        Xb, yb = self.X_tr[idx], self.y_tr[idx]
        tau = self.temps[i]
        z = self._margins(Xb, yb, y_i, tau)
        coef = expit(x[idx]) * expit(z) * expit(-z) / (tau**2 * len(idx))
        H = (Xb.multiply(coef[:, None]).T @ Xb).toarray()
        H = 0.5 * (H + H.T)  # sparse matmul rounding breaks exact symmetry
        return H + self.lambda_reg * np.eye(self._d_w)

    def jacobian_xy_g_vec(self, i, x, y_i, batch, w):
        idx = batch.indices
        Xb, yb = self.X_tr[idx], self.y_tr[idx]
        tau = self.temps[i]
        z = self._margins(Xb, yb, y_i, tau)
        sig = expit(x[idx])
        dot = np.asarray(Xb @ w).ravel()
        vals = sig * (1.0 - sig) * (-expit(-z)) * yb * dot / (tau * len(idx))
        out = np.zeros(self.d_x)
        np.add.at(out, idx, vals)
        return out

    def lower_value(self, i, x, y_i, batch):
        idx = batch.indices
        z = self._margins(self.X_tr[idx], self.y_tr[idx], y_i, self.temps[i])
        val = float(np.mean(expit(x[idx]) * np.logaddexp(0.0, -z)))
        return val + 0.5 * self.lambda_reg * float(y_i @ y_i)

    # --- extras for verification and experiments -------------------------
    def grad_x_g(self, i, x, y_i, batch):
        """Partial derivative of the batch lower objective in p (through the
        sigmoid weights); auxiliary, not used by the solvers."""
        idx = batch.indices
        z = self._margins(self.X_tr[idx], self.y_tr[idx], y_i, self.temps[i])
        sig = expit(x[idx])
        vals = sig * (1.0 - sig) * np.logaddexp(0.0, -z) / len(idx)
        out = np.zeros(self.d_x)
        np.add.at(out, idx, vals)
        return out

    def accuracy(self, w: np.ndarray, split: str = "test") -> float:
        if split == "test":
            X, y = self.X_test, self.y_test
            if X is None:
                raise ParameterError("dataset has no test split")
        elif split == "val":
            X, y = self.X_val, self.y_val
        elif split == "train":
            X, y = self.X_tr, self.y_tr
        else:
            raise ParameterError(f"unknown split {split!r}")
        pred = np.where(np.asarray(X @ w).ravel() >= 0, 1.0, -1.0)
        return float(np.mean(pred == y))


def make_hyperweight(dataset: Dataset, m: int, lambda_reg: float,
                     temp_range: tuple[float, float] = (1.0, 11.0),
                     seed: int = 0, dense_hessian: bool = True,
                     ) -> HyperWeightMBBO:
    """Instance with m temperatures drawn once from the given range."""
    if len(dataset.train_idx) == 0:
        raise ParameterError("empty training split")
    rng = np.random.default_rng(seed)
    temps = rng.uniform(temp_range[0], temp_range[1], size=m)
    return HyperWeightMBBO(dataset, temps, lambda_reg,
                           dense_hessian=dense_hessian)
