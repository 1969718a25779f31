"""Synthetic quadratic multi-block bilevel testbed.

Per block i the upper objective is 0.5 ||y_i - b_i||^2 and the lower
objective is 0.5 ||y_i - A_i x||^2 + (lam/2) ||y_i||^2, so the exact lower
solution is y_i(x) = A_i x / (1 + lam) and the overall objective is a
convex quadratic in x with a computable minimizer, gradient-dominance
constant and smoothness constant.  That makes the testbed usable as an
independent ground truth for solver runs.

Stochasticity comes from a finite per-block sample set of additive
perturbations: per-sample shifts on the two gradient targets, plus
symmetric per-sample perturbations of the lower Hessian and of the mixed
second-derivative block.  The sets are centered exactly, so full-batch
averages coincide with the deterministic oracle to round-off, and they are
rescaled so the mean squared perturbation norm equals sigma^2 exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..problem import Batch, ProblemConstants, ProblemOracle


def _center_scale_vectors(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Center rows to exact zero mean and scale to mean ||row||^2 = sigma^2."""
    arr = arr - arr.mean(axis=0)
    ms = float(np.mean(np.sum(arr * arr, axis=tuple(range(1, arr.ndim)))))
    if ms == 0.0:
        return np.zeros_like(arr)
    return arr * (sigma / np.sqrt(ms))


class QuadraticMBBO(ProblemOracle):
    has_dense_hessian = True

    def __init__(self, A: list[np.ndarray], b: list[np.ndarray],
                 lam_reg: float = 0.0, noise_sigma: float = 0.0,
                 n_samples: int = 256, seed: int = 0,
                 c_fy_margin: float = 4.0):
        if lam_reg < 0:
            raise ParameterError(f"lam_reg must be >= 0, got {lam_reg}")
        self.A = [np.asarray(a, dtype=np.float64) for a in A]
        self.b = [np.asarray(v, dtype=np.float64) for v in b]
        if len(self.A) != len(self.b):
            raise ParameterError("A and b must have one entry per block")
        self.m = len(self.A)
        self.d_x = self.A[0].shape[1]
        for i, (a, v) in enumerate(zip(self.A, self.b)):
            if a.shape[1] != self.d_x:
                raise ParameterError(f"block {i}: A has {a.shape[1]} columns, "
                                     f"expected {self.d_x}")
            if v.shape != (a.shape[0],):
                raise ParameterError(f"block {i}: b shape {v.shape} does not "
                                     f"match A rows {a.shape[0]}")
        self.lam_reg = float(lam_reg)
        self.noise_sigma = float(noise_sigma)
        self.n_samples = int(n_samples)

        kappa = 1.0 + self.lam_reg  # lower-level curvature
        self._kappa = kappa

        rng = np.random.default_rng(seed)
        self._beta = []   # upper target shifts
        self._delta = []  # lower target shifts
        self._M = []      # lower Hessian perturbations (symmetric)
        self._P = []      # mixed-block perturbations
        N = self.n_samples
        for i in range(self.m):
            d = self.d_y(i)
            if noise_sigma == 0.0:
                self._beta.append(np.zeros((N, d)))
                self._delta.append(np.zeros((N, d)))
                self._M.append(np.zeros((N, d, d)))
                self._P.append(np.zeros((N, self.d_x, d)))
                continue
            self._beta.append(_center_scale_vectors(
                rng.standard_normal((N, d)), noise_sigma))
            self._delta.append(_center_scale_vectors(
                rng.standard_normal((N, d)), noise_sigma))
            raw = rng.standard_normal((N, d, d))
            sym = 0.5 * (raw + np.transpose(raw, (0, 2, 1)))
            self._M.append(_center_scale_vectors(sym, noise_sigma))
            self._P.append(_center_scale_vectors(
                rng.standard_normal((N, self.d_x, d)), noise_sigma))

        # Deterministic curvature of the reduced objective F.
        Q = np.zeros((self.d_x, self.d_x))
        c = np.zeros(self.d_x)
        for a, v in zip(self.A, self.b):
            Q += a.T @ a
            c += a.T @ v
        Q /= self.m * kappa**2
        c /= self.m * kappa
        self._Q = 0.5 * (Q + Q.T)
        self._c = c
        evals = np.linalg.eigvalsh(self._Q)
        if evals[0] <= 0:
            raise ParameterError(
                "reduced objective is not strictly convex; choose A_i with "
                f"jointly full column rank (min eigenvalue {evals[0]:.3e})")
        self._x_star = np.linalg.solve(self._Q, self._c)
        self._F_star = self.F_exact(self._x_star)

        a_norms = [np.linalg.norm(a, 2) for a in self.A]
        b_norms = [np.linalg.norm(v) for v in self.b]
        x_scale = float(np.linalg.norm(self._x_star)) + 1.0
        c_fy = c_fy_margin * (max(b_norms) + max(a_norms) * 2.0 * x_scale
                              + noise_sigma)
        c_gyy = kappa + max(
            float(np.max(np.sqrt(np.sum(Mi * Mi, axis=(1, 2)))))
            if noise_sigma > 0 else 0.0
            for Mi in self._M)
        self.constants = ProblemConstants(
            lam=kappa, L_g=kappa, sigma=noise_sigma,
            C_fy=c_fy, C_gyy_tilde=c_gyy,
            L_fy=1.0, L_gyy=0.0,
            L_F=float(evals[-1]),
            L_y=max(a_norms) / kappa,
            mu_pl=2.0 * float(evals[0]),
        )

    # --- structure --------------------------------------------------------
    def d_y(self, i: int) -> int:
        return self.A[i].shape[0]

    # --- sampling ----------------------------------------------------------
    def sample_upper_batch(self, i, size, rng) -> Batch:
        return Batch(rng.integers(0, self.n_samples, size=size))

    sample_lower_batch = sample_upper_batch

    def full_upper_batch(self, i) -> Batch:
        return Batch(np.arange(self.n_samples))

    full_lower_batch = full_upper_batch

    # --- batch noise means, memoized on the batch object ---------------------
    def _noise_mean(self, kind: str, i: int, batch):
        key = (kind, i)
        cached = batch.cache.get(key)
        if cached is None:
            arr = getattr(self, kind)[i]
            cached = arr[batch.indices].mean(axis=0)
            batch.cache[key] = cached
        return cached

    # --- oracle evaluations -------------------------------------------------
    def grad_x_f(self, i, x, y_i, batch):
        return np.zeros(self.d_x)

    def grad_y_f(self, i, x, y_i, batch):
        return y_i - self.b[i] - self._noise_mean("_beta", i, batch)

    def grad_y_g(self, i, x, y_i, batch):
        out = (self._kappa * y_i - self.A[i] @ x
               - self._noise_mean("_delta", i, batch))
        if self.noise_sigma > 0.0:
            out = out + self._noise_mean("_M", i, batch) @ y_i
            out = out + self._noise_mean("_P", i, batch).T @ x
        return out

    def hessian_yy_g(self, i, x, y_i, batch):
        H = self._kappa * np.eye(self.d_y(i))
        if self.noise_sigma > 0.0:
            H = H + self._noise_mean("_M", i, batch)
        return H

    def hessian_yy_g_vec(self, i, x, y_i, batch, v):
        out = self._kappa * v
        if self.noise_sigma > 0.0:
            out = out + self._noise_mean("_M", i, batch) @ v
        return out

    def jacobian_xy_g_vec(self, i, x, y_i, batch, w):
        out = -(self.A[i].T @ w)
        if self.noise_sigma > 0.0:
            out = out + self._noise_mean("_P", i, batch) @ w
        return out

    def upper_value(self, i, x, y_i, batch):
        r = y_i - self.b[i] - self._beta[i][batch.indices]
        return float(0.5 * np.mean(np.sum(r * r, axis=1)))

    def lower_value(self, i, x, y_i, batch):
        idx = batch.indices
        r = y_i - self.A[i] @ x - self._delta[i][idx]
        val = 0.5 * np.mean(np.sum(r * r, axis=1))
        val += 0.5 * self.lam_reg * float(y_i @ y_i)
        if self.noise_sigma > 0.0:
            val += 0.5 * float(y_i @ (self._M[i][idx].mean(axis=0) @ y_i))
            val += float(x @ (self._P[i][idx].mean(axis=0) @ y_i))
        return float(val)

    # --- closed forms --------------------------------------------------------
    def exact_lower(self, x, i) -> np.ndarray:
        return self.A[i] @ x / self._kappa

    def exact_hypergradient_closed(self, x) -> np.ndarray:
        return self._Q @ x - self._c

    def F_exact(self, x) -> float:
        total = 0.0
        for a, v in zip(self.A, self.b):
            r = a @ x / self._kappa - v
            total += 0.5 * float(r @ r)
        return total / self.m

    @property
    def x_star(self) -> np.ndarray:
        return self._x_star.copy()

    @property
    def exact_min_F(self) -> float:
        return self._F_star


def make_quadratic(m: int, d_x: int, d_y: int, noise_sigma: float,
                   seed: int, lam_reg: float = 0.0, n_samples: int = 256,
                   sv_range: tuple[float, float] = (0.7, 1.3)) -> QuadraticMBBO:
    """Random well-conditioned instance with uniform block dimensions."""
    rng = np.random.default_rng(seed)
    A, b = [], []
    k = min(d_x, d_y)
    for _ in range(m):
        U, _ = np.linalg.qr(rng.standard_normal((d_y, k)))
        V, _ = np.linalg.qr(rng.standard_normal((d_x, k)))
        svals = rng.uniform(sv_range[0], sv_range[1], size=k)
        A.append(U @ np.diag(svals) @ V.T)
        b.append(rng.standard_normal(d_y))
    return QuadraticMBBO(A, b, lam_reg=lam_reg, noise_sigma=noise_sigma,
                         n_samples=n_samples, seed=int(rng.integers(2**31)))
