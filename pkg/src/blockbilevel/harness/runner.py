"""Experiment orchestration: per-seed runs, CSV/JSON emission, the
block/batch speedup sweep, and the oracle verification entry points."""

from __future__ import annotations

import json
import statistics
import subprocess
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..oracle import (exact_hypergradient, finite_difference_grad,
                      oracle_consistency_suite, upper_objective)
from ..restart import build_schedule, run_restarted
from ..solver_v1 import run_v1
from ..solver_v2 import run_v2
from ..trace import Trace, TraceRow
from .config import RunConfig


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _stitch(traces: list[Trace]) -> Trace:
    """Concatenate per-stage traces into one global-iteration trace."""
    out = Trace()
    offset = 0
    last_samples = 0
    for k, tr in enumerate(traces):
        for row in tr.rows:
            if k > 0 and row.iter == 0:
                continue  # interior stage boundaries repeat the state
            out.append(TraceRow(
                iter=offset + row.iter, samples=max(row.samples, last_samples),
                wall_ms=row.wall_ms, z_norm=row.z_norm,
                exact_grad_norm=row.exact_grad_norm,
                upper_loss=row.upper_loss, delta_y=row.delta_y,
                delta_tracker=row.delta_tracker))
            last_samples = out.rows[-1].samples
        offset = out.rows[-1].iter
    return out


def _run_one(config: RunConfig, problem, seed: int):
    params = config.hyperparams(problem).with_seed(seed)
    ev = config.get("run", "eval_every")
    kw = dict(eval_every=ev,
              exact_diagnostics=config.get("run", "exact_diagnostics"),
              measure_time=config.get("run", "timing"))
    algo = config.algorithm
    if algo == "bsvrb-v1":
        res = run_v1(problem, params, **kw)
        return res.state, res.trace
    if algo == "bsvrb-v2":
        res = run_v2(problem, params, **kw)
        return res.state, res.trace
    if algo == "baseline-ma":
        params = replace(params, gamma_override=0.0, beta=1.0)
        res = run_v1(problem, params, **kw)
        return res.state, res.trace
    if algo in ("re-bsvrb-v1", "re-bsvrb-v2"):
        r = config.values["restart"]
        mu = r["mu"] if r["mu"] is not None else problem.constants.mu_pl
        if mu is None:
            raise ConfigError(
                "restart mode needs restart.mu or a problem that declares "
                "its gradient-dominance constant")
        variant = algo.rsplit("-", 1)[-1]
        schedule = build_schedule(
            mu=mu, eps_target=r["eps_target"], I=params.I, B=params.B,
            m=problem.m, constants=problem.constants, variant=variant,
            multipliers=config.restart_multipliers(), seed=seed,
            init_batch=params.init_batch, init_steps=params.init_steps,
            lazy_updates=params.lazy_updates)
        state, traces = run_restarted(problem, schedule, **kw)
        return state, _stitch(traces)
    raise ConfigError(f"unknown algorithm {algo!r}")


def run_experiment(config: RunConfig) -> int:
    """Run every seed, write one CSV per seed plus an aggregate JSON."""
    out_dir = Path(config.get("run", "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = config.build_problem()
    per_seed = []
    for seed in config.seeds:
        state, trace = _run_one(config, problem, seed)
        csv_path = out_dir / f"{config.algorithm}_seed{seed}.csv"
        trace.to_csv(csv_path)
        final = trace.final()
        entry = {
            "seed": seed,
            "iterations": final.iter,
            "samples": final.samples,
            "wall_ms": final.wall_ms,
            "final_z_norm": final.z_norm,
            "final_exact_grad_norm": float(np.linalg.norm(
                exact_hypergradient(problem, state.x))),
            "final_upper_loss": upper_objective(problem, state.x),
            "csv": str(csv_path),
        }
        per_seed.append(entry)

    def med(key):
        return statistics.median(e[key] for e in per_seed)

    summary = {
        "algorithm": config.algorithm,
        "config": config.echo(),
        "git": _git_describe(),
        "per_seed": per_seed,
        "median": {k: med(k) for k in ("final_z_norm",
                                       "final_exact_grad_norm",
                                       "final_upper_loss", "samples",
                                       "wall_ms")},
    }
    with open(out_dir / f"{config.algorithm}_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def iterations_to_threshold(problem, params, variant: str,
                            threshold: float, check_every: int = 25) -> int:
    """Iterations until the exact overall gradient norm crosses the
    threshold (params.T if never)."""
    run_fn = run_v1 if variant == "v1" else run_v2
    hit = {"iter": params.T}

    def stop(state):
        g = np.linalg.norm(exact_hypergradient(problem, state.x))
        if g <= threshold:
            hit["iter"] = min(hit["iter"], state.iter - 1)
            return True
        return False

    run_fn(problem, params, eval_every=check_every, stop_when=stop,
           measure_time=False)
    return hit["iter"]


def sweep_speedup(config: RunConfig, sweep: str, values: list[int],
                  threshold: float = 0.05, check_every: int = 25) -> dict:
    """Median iterations-to-threshold as the block count I (or batch size B)
    sweeps over the given values; emits a table and returns it."""
    if sweep not in ("I", "B"):
        raise ConfigError(f"sweep must be 'I' or 'B', got {sweep!r}")
    if config.algorithm not in ("bsvrb-v1", "bsvrb-v2"):
        raise ConfigError("sweep-speedup supports bsvrb-v1 / bsvrb-v2 only")
    variant = config.algorithm.rsplit("-", 1)[-1]
    problem = config.build_problem()
    table = []
    for val in values:
        iters = []
        for seed in config.seeds:
            params = config.hyperparams(problem).with_seed(seed)
            params = replace(params, **{sweep: val})
            params.validate(problem.m)
            iters.append(iterations_to_threshold(
                problem, params, variant, threshold, check_every))
        med = statistics.median(iters)
        mad = statistics.median([abs(v - med) for v in iters])
        table.append({sweep: val, "median_iters": med, "mad": mad,
                      "iters": iters})

    out_dir = Path(config.get("run", "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    result = {"sweep": sweep, "threshold": threshold, "rows": table,
              "nonincreasing_within_mad": all(
                  table[k + 1]["median_iters"]
                  <= table[k]["median_iters"] + max(table[k]["mad"], 0.0)
                  for k in range(len(table) - 1))}
    with open(out_dir / f"sweep_{sweep}_{config.algorithm}.json", "w") as fh:
        json.dump(result, fh, indent=2)
    header = f"{sweep:>6} {'median-iters':>14} {'mad':>8}"
    print(header)
    for row in table:
        print(f"{row[sweep]:>6} {row['median_iters']:>14.1f} "
              f"{row['mad']:>8.1f}")
    print(f"nonincreasing within one MAD: "
          f"{result['nonincreasing_within_mad']}")
    return result


def run_verify(config: RunConfig) -> int:
    """Oracle-consistency suite of the configured problem."""
    problem = config.build_problem()
    results = oracle_consistency_suite(problem, seed=config.seeds[0])
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def run_gradcheck(config: RunConfig, n_points: int = 5, h: float = 1e-5,
                  rtol: float = 1e-4) -> int:
    """Compare the reference overall gradient against central differences
    of the reduced objective at random upper iterates."""
    problem = config.build_problem()
    rng = np.random.default_rng(config.seeds[0])
    worst = 0.0
    for k in range(n_points):
        x = rng.standard_normal(problem.d_x)
        exact = exact_hypergradient(problem, x)
        fd = finite_difference_grad(
            lambda xx: upper_objective(problem, xx), x, h=h)
        err = np.linalg.norm(exact - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, err)
        print(f"point {k}: relative error {err:.3e}")
    ok = worst <= rtol
    print(f"gradcheck {'PASS' if ok else 'FAIL'} "
          f"(worst {worst:.3e}, tol {rtol})")
    return 0 if ok else 1
