"""Monte-Carlo behaviour of the multi-block tracker on synthetic tasks.

The error functional is delta_t = sum_i ||h_{i,t} - h_i(e_{i,t-1})||^2.
On a static task its guaranteed steady state is 2 m alpha sigma^2 / B (the
fixed point of the one-step error recursion); on a drifting task the
recursion adds an O(m^2 L^2 / I) movement term.  Both are upper bounds, so
the checks are one-sided with a generous sanity floor.
"""

import numpy as np

from blockbilevel import MsvrTracker, block_sample, msvr_gamma, msvr_update
from blockbilevel.rng import substream

DIM = 2


def _run_static(m, I, B, alpha, sigma, T, seed, replicas=4):
    """Track m static targets through noisy batch evaluations; the same
    batch noise is shared by the paired evaluations, as in the solvers."""
    gamma = msvr_gamma(m, I, alpha)
    errs = []
    for r in range(replicas):
        rng = substream(seed + r, 0, 0)
        targets = rng.standard_normal((m, DIM))
        tracker = MsvrTracker(values=[t.copy() for t in targets],
                              alpha=alpha, gamma=gamma)
        tail = []
        for t in range(T):
            sampled = block_sample(m, I, rng)
            news, olds = [], []
            for i in sampled:
                noise = rng.normal(0.0, sigma / np.sqrt(B * DIM), size=DIM)
                val = targets[i] + noise
                news.append(val)
                olds.append(val.copy())  # static input, same batch
            msvr_update(tracker, sampled, news, olds)
            if t >= T // 2:
                tail.append(sum(float(np.sum((tracker[i] - targets[i]) ** 2))
                                for i in range(m)))
        errs.append(np.mean(tail))
    return float(np.mean(errs))


def steady_state_bound(m, alpha, sigma, B):
    return 2.0 * m * alpha * sigma**2 / B


def test_static_tracking_within_bound_spotcheck():
    # m=10, I=m/10, B=4, alpha=0.1 over 10^4 iterations
    m, I, B, alpha, sigma = 10, 1, 4, 0.1, 1.0
    measured = _run_static(m, I, B, alpha, sigma, T=10_000, seed=100)
    bound = steady_state_bound(m, alpha, sigma, B)
    assert measured <= 3.0 * bound
    assert measured >= bound / 20.0  # sanity: errors are not degenerate


def test_static_tracking_full_sampling():
    m, I, B, alpha, sigma = 8, 8, 2, 0.2, 0.7
    measured = _run_static(m, I, B, alpha, sigma, T=4_000, seed=200)
    bound = steady_state_bound(m, alpha, sigma, B)
    assert measured <= 3.0 * bound
    assert measured >= bound / 20.0


def test_error_recursion_inequality_on_drifting_task():
    # one tracker step must satisfy
    #   E[d_{t+1}] <= (1 - I a/m) E[d_t] + 2 I a^2 s^2/B + (8 m^2 L^2/I) E[mv]
    # where mv is the summed squared input movement; averaged over replicas
    m, I, B, alpha, sigma = 6, 2, 4, 0.2, 0.5
    L = 1.0
    T, R = 60, 400
    gamma = msvr_gamma(m, I, alpha)
    rng_maps = np.random.default_rng(17)
    maps = []
    for _ in range(m):
        A = rng_maps.standard_normal((DIM, DIM))
        maps.append(A / max(1.0, np.linalg.norm(A, 2)))  # ||A|| <= L = 1

    def inputs(i, t):
        # deterministic slow per-block drift
        phase = 0.5 * i
        return 0.05 * np.array([np.sin(0.11 * t + phase),
                                np.cos(0.07 * t + phase)])

    deltas = np.zeros((R, T + 1))
    for r in range(R):
        rng = substream(300 + r, 0, 0)
        tracker = MsvrTracker(
            values=[maps[i] @ inputs(i, 0) for i in range(m)],
            alpha=alpha, gamma=gamma)
        for t in range(1, T + 1):
            sampled = block_sample(m, I, rng)
            news, olds = [], []
            for i in sampled:
                noise = rng.normal(0.0, sigma / np.sqrt(B * DIM), size=DIM)
                news.append(maps[i] @ inputs(i, t) + noise)
                olds.append(maps[i] @ inputs(i, t - 1) + noise)
            msvr_update(tracker, sampled, news, olds)
            deltas[r, t] = sum(
                float(np.sum((tracker[i] - maps[i] @ inputs(i, t - 1)) ** 2))
                for i in range(m))

    move = np.array([sum(float(np.sum((inputs(i, t) - inputs(i, t - 1)) ** 2))
                         for i in range(m)) for t in range(T + 1)])
    mean_d = deltas.mean(axis=0)
    for t in range(1, T):
        rhs = ((1 - I * alpha / m) * mean_d[t]
               + 2 * I * alpha**2 * sigma**2 / B
               + (8 * m**2 * L**2 / I) * move[t])
        assert mean_d[t + 1] <= 1.15 * rhs + 1e-9, f"violated at t={t}"
