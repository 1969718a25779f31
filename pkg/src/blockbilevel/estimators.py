"""Variance-reduced tracking estimators and projection operators.

Two recursive trackers are provided.  ``storm_update`` is the classic
momentum-corrected estimator for a single drifting quantity,

    z' = (1 - beta) (z - G_tilde) + G,

where G and G_tilde are evaluations at the new and old point on a shared
mini-batch.  The multi-block tracker updates only a sampled subset of
blocks per step and compensates for block-sampling noise through an
enlarged correction coefficient

    gamma = (m - I) / (I (1 - alpha)) + (1 - alpha),

which reduces to the single-block setting gamma = 1 - alpha when I = m.
Sampled blocks are updated as

    h_i' = Project[(1 - alpha) h_i + alpha new_i + gamma (new_i - old_i)],

with new_i and old_i evaluated on the *same* batch; unsampled blocks are
left untouched.

The projections used by the solvers are ``spectral_floor`` (eigenvalue
clipping so a symmetric matrix stays >= lam * I) and ``ball_project``
(Euclidean ball of a given radius).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError


def msvr_gamma(m: int, I: int, alpha: float) -> float:
    """Correction coefficient compensating block-sampling randomness."""
    if not 1 <= I <= m:
        raise ParameterError(f"need 1 <= I <= m, got I={I}, m={m}")
    if not 0 < alpha < 1:
        raise ParameterError(
            f"gamma is only defined for 0 < alpha < 1, got alpha={alpha}")
    return (m - I) / (I * (1.0 - alpha)) + (1.0 - alpha)


def storm_update(z: np.ndarray, G: np.ndarray, G_tilde: np.ndarray,
                 beta: float) -> np.ndarray:
    """One momentum-corrected tracker step: (1-beta)(z - G_tilde) + G.

    The operation order keeps two exact identities: G_tilde == z cancels
    history bitwise, and beta == 1 returns G bitwise.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != np.shape(G) or z.shape != np.shape(G_tilde):
        raise ValueError(f"shape mismatch: z{z.shape}, G{np.shape(G)}, "
                         f"G_tilde{np.shape(G_tilde)}")
    if not 0 < beta <= 1:
        raise ParameterError(f"need 0 < beta <= 1, got {beta}")
    return (1.0 - beta) * (z - G_tilde) + G


def msvr_combine(value: np.ndarray, new: np.ndarray, old: np.ndarray,
                 alpha: float, gamma: float) -> np.ndarray:
    """Single-block tracker combination, before any projection.

    Algebraically (1-alpha) value + alpha new + gamma (new - old); written
    as (1-alpha)(value - old) + new + (gamma - (1-alpha))(new - old) so
    that gamma = 1 - alpha reproduces ``storm_update`` bit for bit.
    """
    value = np.asarray(value, dtype=np.float64)
    if value.shape != np.shape(new) or value.shape != np.shape(old):
        raise ValueError(f"shape mismatch: value{value.shape}, "
                         f"new{np.shape(new)}, old{np.shape(old)}")
    return ((1.0 - alpha) * (value - old) + new
            + (gamma - (1.0 - alpha)) * (new - old))


@dataclass
class MsvrTracker:
    """Per-block tracked estimates (vector- or matrix-valued).

    ``projector``, when set, is applied after every update of a sampled
    block; values then always lie in the projector's feasible set.
    """

    values: list[np.ndarray]
    alpha: float
    gamma: float
    projector: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def paper_mode(cls, values, m: int, I: int, alpha: float,
                   projector=None) -> "MsvrTracker":
        """Tracker with gamma computed from (m, I, alpha)."""
        return cls(values=list(values), alpha=alpha,
                   gamma=msvr_gamma(m, I, alpha), projector=projector)

    def update_block(self, i: int, new: np.ndarray, old: np.ndarray):
        v = msvr_combine(self.values[i], new, old, self.alpha, self.gamma)
        if self.projector is not None:
            v = self.projector(v)
        self.values[i] = v

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[i]

    def __len__(self) -> int:
        return len(self.values)

    def copy(self) -> "MsvrTracker":
        return MsvrTracker(values=[v.copy() for v in self.values],
                           alpha=self.alpha, gamma=self.gamma,
                           projector=self.projector)


def msvr_update(tracker: MsvrTracker, sampled_blocks, new_evals,
                old_evals) -> MsvrTracker:
    """Update sampled blocks in place; unsampled blocks are untouched.

    ``new_evals`` and ``old_evals`` map positionally onto
    ``sampled_blocks`` and must come from the same per-block mini-batch.
    """
    if not (len(sampled_blocks) == len(new_evals) == len(old_evals)):
        raise ValueError("sampled_blocks, new_evals, old_evals lengths differ")
    for i, new, old in zip(sampled_blocks, new_evals, old_evals):
        tracker.update_block(int(i), new, old)
    return tracker


def spectral_floor(X: np.ndarray, floor: float) -> np.ndarray:
    """Project a symmetric matrix onto {X : X >= floor * I}.

    Eigen-decomposes, clips eigenvalues from below, recomposes.  For
    symmetric input this equals the SVD-based construction and is the
    Frobenius-nearest point of the feasible set.  Idempotent.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("spectral_floor: non-finite entries")
    X = 0.5 * (X + X.T)
    # Gershgorin sufficient condition: if every disc lies above the floor,
    # the input is already feasible and the decomposition can be skipped.
    diag = np.diagonal(X)
    radii = np.sum(np.abs(X), axis=1) - np.abs(diag)
    if np.min(diag - radii) >= floor:
        return X
    w, Q = np.linalg.eigh(X)
    if w[0] >= floor:
        return X
    w = np.maximum(w, floor)
    assert w[0] >= floor
    out = (Q * w) @ Q.T
    return 0.5 * (out + out.T)


def ball_project(v: np.ndarray, radius: float) -> np.ndarray:
    """Project a vector onto the Euclidean ball of the given radius."""
    if radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= radius:
        return v
    out = v * (radius / n)
    assert float(np.linalg.norm(out)) <= radius + 1e-12
    return out
