"""Shared run-loop plumbing for both solvers."""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .problem import ProblemOracle
from .rng import RETURN_LANE, substream
from .trace import Trace, TraceRow


@dataclass
class RunResult:
    state: object          # final state, lazily deferred steps flushed
    returned: object       # selected-iterate state (== state for "last")
    trace: Trace


def draw_batches(problem: ProblemOracle, sampled, B: int, seed: int, t: int):
    """Draw the two per-block mini-batches for one iteration.

    Exactly one upper and one lower batch per sampled block; every quantity
    of the iteration that the update rules evaluate "on the same batch"
    receives these same Batch objects.
    """
    batches = {}
    for i in sampled:
        i = int(i)
        rng = substream(seed, t, i)
        up = problem.sample_upper_batch(i, B, rng)
        lo = problem.sample_lower_batch(i, B, rng)
        batches[i] = (up, lo)
    return batches


def run_loop(state, problem, params, step_fn, diagnostics_fn, *,
             eval_every: int = 0, exact_diagnostics: bool = False,
             return_iterate: str = "last", callbacks=(),
             measure_time: bool = True, stop_when=None) -> RunResult:
    """Drive ``step_fn`` for T iterations, recording a Trace.

    ``diagnostics_fn(state, problem)`` returns the optional exact trace
    fields; it is only invoked when ``exact_diagnostics`` is set.  The
    returned state is the final one, or a snapshot at a uniformly random
    iteration when ``return_iterate == "random"``.  ``stop_when(state)``,
    if given, is checked at every recorded row and ends the run early;
    it must not consume solver randomness.
    """
    if return_iterate not in ("last", "random"):
        raise ValueError(f"return_iterate must be 'last' or 'random', "
                         f"got {return_iterate!r}")
    T = params.T
    t_sel = 0
    if return_iterate == "random" and T > 0:
        rng = substream(params.seed, 0, RETURN_LANE)
        t_sel = int(rng.integers(1, T + 1))

    trace = Trace()
    start = perf_counter()

    def record(t: int):
        wall = (perf_counter() - start) * 1e3 if measure_time else 0.0
        extra = diagnostics_fn(state, problem) if exact_diagnostics else {}
        row = TraceRow(iter=t, samples=state.samples, wall_ms=wall,
                       z_norm=float(np.linalg.norm(state.z)), **extra)
        trace.append(row)
        for cb in callbacks:
            cb(state, row)

    record(0)
    returned = None
    for t in range(1, T + 1):
        step_fn(state, problem, params)
        if t == t_sel:
            returned = state.clone_flushed()
        if (eval_every and t % eval_every == 0) or t == T:
            if __debug__:
                state.check_invariants()
            record(t)
            if stop_when is not None and stop_when(state):
                break
    state.flush_pending()
    if returned is None:
        returned = state
    return RunResult(state=state, returned=returned, trace=trace)
