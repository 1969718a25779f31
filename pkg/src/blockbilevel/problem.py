"""Problem-oracle interface for multi-block bilevel instances.

An instance couples one upper-level variable x to m lower-level problems,

    min_x  (1/m) sum_i f_i(x, y_i(x)),    y_i(x) = argmin_{y_i} g_i(x, y_i),

where each g_i is strongly convex in y_i and both levels are observed
through mini-batch stochastic oracles.  Solvers interact with instances
exclusively through this interface.
"""

from __future__ import annotations

import abc
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Batch:
    """A drawn mini-batch, identified by sample indices into a block's data.

    The same Batch object is deliberately reused wherever the algorithms
    require evaluations "on the same mini-batch"; identity of the object is
    the identity of the batch.  ``cache`` lets problems memoize
    point-independent per-batch quantities (e.g. averaged noise terms);
    it never affects values, only speed.
    """

    indices: np.ndarray
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "indices",
                           np.asarray(self.indices, dtype=np.int64))

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


@dataclass
class ProblemConstants:
    """Declared problem constants consumed by theory-mode schedules.

    ``lam``, ``L_g`` and ``sigma`` are required; the rest default to None
    and are filled by problem constructors when computable.  Values are
    conservative bounds, not tight estimates.
    """

    lam: float                      # strong convexity of each lower objective
    L_g: float                      # smoothness of each lower objective
    sigma: float                    # per-sample oracle noise level
    C_fy: float | None = None       # bound on ||grad_y f_i||
    C_gyy_tilde: float | None = None  # bound on per-sample ||hess_yy g_i||
    L_fy: float | None = None       # Lipschitz constant of grad_y f_i
    L_gyy: float | None = None      # Lipschitz constant of hess_yy g_i
    L_F: float | None = None        # smoothness of the overall objective
    L_y: float | None = None        # Lipschitz constant of x -> y_i(x)
    mu_pl: float | None = None      # gradient-dominance constant, if any

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterError(f"lam must be positive, got {self.lam}")
        if self.L_g < self.lam:
            raise ParameterError(
                f"L_g={self.L_g} cannot be smaller than lam={self.lam}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def v_radius(self) -> float | None:
        """Radius C_fy / lam of the ball containing every exact
        Hessian-inverse-vector solution."""
        if self.C_fy is None:
            return None
        return self.C_fy / self.lam


class ProblemOracle(abc.ABC):
    """Stochastic first/second-order oracle for one multi-block instance.

    All oracle evaluations are pure functions of their arguments plus the
    batch, so repeated calls with the same batch return identical values.
    Batch-averaged outputs are unbiased for the corresponding expectations.
    ``hessian_yy_g`` (dense) is optional; implementations that cannot
    provide it set ``has_dense_hessian = False`` and raise
    NotImplementedError.
    """

    m: int
    d_x: int
    constants: ProblemConstants
    has_dense_hessian: bool = True

    @abc.abstractmethod
    def d_y(self, i: int) -> int:
        """Dimension of the i-th lower variable."""

    def y_dims(self) -> list[int]:
        return [self.d_y(i) for i in range(self.m)]

    # --- sampling -------------------------------------------------------
    @abc.abstractmethod
    def sample_upper_batch(self, i: int, size: int,
                           rng: np.random.Generator) -> Batch: ...

    @abc.abstractmethod
    def sample_lower_batch(self, i: int, size: int,
                           rng: np.random.Generator) -> Batch: ...

    @abc.abstractmethod
    def full_upper_batch(self, i: int) -> Batch:
        """Deterministic batch covering the block's full upper-level data."""

    @abc.abstractmethod
    def full_lower_batch(self, i: int) -> Batch: ...

    # --- first order ----------------------------------------------------
    @abc.abstractmethod
    def grad_x_f(self, i, x, y_i, batch: Batch) -> np.ndarray: ...

    @abc.abstractmethod
    def grad_y_f(self, i, x, y_i, batch: Batch) -> np.ndarray: ...

    @abc.abstractmethod
    def grad_y_g(self, i, x, y_i, batch: Batch) -> np.ndarray: ...

    # --- second order ---------------------------------------------------
    @abc.abstractmethod
    def jacobian_xy_g_vec(self, i, x, y_i, batch: Batch,
                          w: np.ndarray) -> np.ndarray:
        """Action of the mixed second-derivative block on w, i.e. the
        d_x-vector (d^2 g_i / dx dy) @ w.  Never materialized as a matrix."""

    def hessian_yy_g(self, i, x, y_i, batch: Batch) -> np.ndarray:
        raise NotImplementedError(
            f"{type(self).__name__} provides no dense lower-level Hessian")

    @abc.abstractmethod
    def hessian_yy_g_vec(self, i, x, y_i, batch: Batch,
                         v: np.ndarray) -> np.ndarray:
        """Hessian-vector product (d^2 g_i / dy^2) @ v."""

    # --- values ---------------------------------------------------------
    @abc.abstractmethod
    def upper_value(self, i, x, y_i, batch: Batch) -> float: ...

    @abc.abstractmethod
    def lower_value(self, i, x, y_i, batch: Batch) -> float: ...


class CountingOracle(ProblemOracle):
    """Transparent wrapper that counts oracle invocations by method name.

    Used by tests and the verification harness to assert structural
    properties such as "this run never materialized a dense Hessian".
    """

    def __init__(self, inner: ProblemOracle):
        self.inner = inner
        self.m = inner.m
        self.d_x = inner.d_x
        self.constants = inner.constants
        self.has_dense_hessian = inner.has_dense_hessian
        self.counts: Counter = Counter()

    def d_y(self, i):
        return self.inner.d_y(i)

    def sample_upper_batch(self, i, size, rng):
        return self.inner.sample_upper_batch(i, size, rng)

    def sample_lower_batch(self, i, size, rng):
        return self.inner.sample_lower_batch(i, size, rng)

    def full_upper_batch(self, i):
        return self.inner.full_upper_batch(i)

    def full_lower_batch(self, i):
        return self.inner.full_lower_batch(i)

    def grad_x_f(self, *a, **kw):
        self.counts["grad_x_f"] += 1
        return self.inner.grad_x_f(*a, **kw)

    def grad_y_f(self, *a, **kw):
        self.counts["grad_y_f"] += 1
        return self.inner.grad_y_f(*a, **kw)

    def grad_y_g(self, *a, **kw):
        self.counts["grad_y_g"] += 1
        return self.inner.grad_y_g(*a, **kw)

    def jacobian_xy_g_vec(self, *a, **kw):
        self.counts["jacobian_xy_g_vec"] += 1
        return self.inner.jacobian_xy_g_vec(*a, **kw)

    def hessian_yy_g(self, *a, **kw):
        self.counts["hessian_yy_g"] += 1
        return self.inner.hessian_yy_g(*a, **kw)

    def hessian_yy_g_vec(self, *a, **kw):
        self.counts["hessian_yy_g_vec"] += 1
        return self.inner.hessian_yy_g_vec(*a, **kw)

    def upper_value(self, *a, **kw):
        self.counts["upper_value"] += 1
        return self.inner.upper_value(*a, **kw)

    def lower_value(self, *a, **kw):
        self.counts["lower_value"] += 1
        return self.inner.lower_value(*a, **kw)

    def __getattr__(self, name):
        # Fall through for problem-specific extras (closed forms etc.).
        return getattr(self.inner, name)


def block_sample(m: int, I: int, rng: np.random.Generator) -> np.ndarray:
    """Draw I distinct block indices, uniform over I-subsets of {0..m-1}.

    Returned sorted so reductions over sampled blocks run in a fixed order
    regardless of how the subset was produced.
    """
    if not 1 <= I <= m:
        raise ParameterError(f"need 1 <= I <= m, got I={I}, m={m}")
    if I == m:
        return np.arange(m, dtype=np.int64)
    picked = rng.choice(m, size=I, replace=False)
    return np.sort(picked.astype(np.int64))
