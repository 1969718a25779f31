"""Run configuration: flat key = value text files with sections, plus
command-line overrides (overrides win).  Unknown keys are rejected."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..hyperparams import HyperParams
from ..problems.datasets import corrupt, load_libsvm, make_synthetic_binary, \
    split_dataset
from ..problems.hyperweight import make_hyperweight
from ..problems.quadratic import make_quadratic
from ..restart import RestartMultipliers

ALGORITHMS = ("bsvrb-v1", "bsvrb-v2", "re-bsvrb-v1", "re-bsvrb-v2",
              "baseline-ma")
_DENSE_HESSIAN_ALGOS = ("bsvrb-v1", "re-bsvrb-v1", "baseline-ma")
PROBLEM_KINDS = ("quadratic", "hyperweight", "libsvm")

# Section -> key -> (type, default).  A default of ... means required;
# None means optional with no default.
_SCHEMA = {
    "run": {
        "algorithm": (str, ...),
        "seeds": (str, "0"),
        "out_dir": (str, "results"),
        "eval_every": (int, 100),
        "timing": (bool, True),
        "exact_diagnostics": (bool, False),
    },
    "problem": {
        "kind": (str, ...),
        "seed": (int, 0),
        # quadratic
        "m": (int, 20),
        "d_x": (int, 5),
        "d_y": (int, 4),
        "noise_sigma": (float, 0.1),
        "lam_reg": (float, 0.0),
        "n_samples": (int, 256),
        # hyperweight / libsvm
        "path": (str, None),
        "n_train": (int, 2000),
        "n_val": (int, 1000),
        "n_test": (int, 1000),
        "d": (int, 30),
        "lambda_reg": (float, 1e-3),
        "temp_min": (float, 1.0),
        "temp_max": (float, 11.0),
        "val_frac": (float, 0.2),
        "test_frac": (float, 0.0),
        "drop_pos_frac": (float, 0.0),
        "flip_prob": (float, 0.0),
        "dense_hessian": (bool, True),
    },
    "hyperparams": {
        "T": (int, 1000),
        "I": (int, None),        # default min(10, m)
        "B": (int, 32),
        "alpha": (float, 0.2),
        "alpha_bar": (float, 0.2),
        "beta": (float, 0.2),
        "tau": (float, None),    # default 2/(3 L_g) from the problem
        "tau_t": (float, 1.0),
        "tau_bar_t": (float, None),  # default tau_t
        "eta": (float, 0.01),
        "init_batch": (int, None),
        "init_steps": (int, 50),
        "lazy_updates": (bool, True),
        "gamma_override": (float, None),
        "radius_override": (float, None),
    },
    "restart": {
        "mu": (float, None),      # default: the problem's declared constant
        "eps_target": (float, 1e-3),
        "c_eps": (float, 1.0),
        "c_mix": (float, 1.0),
        "c_step": (float, 1.0),
        "c_len": (float, 4.0),
        "eps1_floor": (float, 1e-8),
    },
}


def _coerce(section: str, key: str, raw: str):
    try:
        typ, _ = _SCHEMA[section][key]
    except KeyError:
        known = ", ".join(sorted(_SCHEMA.get(section, ())))
        raise ConfigError(
            f"unknown key '{section}.{key}' (known keys in [{section}]: "
            f"{known or 'none; unknown section'})") from None
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"'{section}.{key}' expects a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"'{section}.{key}' expects {typ.__name__}, "
                          f"got {raw!r}") from None


@dataclass
class RunConfig:
    algorithm: str
    values: dict = field(default_factory=dict)  # section -> key -> value

    def get(self, section: str, key: str):
        return self.values[section][key]

    # --- builders -------------------------------------------------------
    def build_problem(self):
        p = self.values["problem"]
        kind = p["kind"]
        if kind == "quadratic":
            return make_quadratic(m=p["m"], d_x=p["d_x"], d_y=p["d_y"],
                                  noise_sigma=p["noise_sigma"],
                                  seed=p["seed"], lam_reg=p["lam_reg"],
                                  n_samples=p["n_samples"])
        if kind == "hyperweight":
            ds = make_synthetic_binary(p["n_train"], p["n_val"], p["n_test"],
                                       p["d"], seed=p["seed"])
            rng = np.random.default_rng(p["seed"] + 1)
            if p["drop_pos_frac"] > 0 or p["flip_prob"] > 0:
                ds = corrupt(ds, p["drop_pos_frac"], p["flip_prob"], rng)
            return make_hyperweight(ds, m=p["m"], lambda_reg=p["lambda_reg"],
                                    temp_range=(p["temp_min"], p["temp_max"]),
                                    seed=p["seed"],
                                    dense_hessian=p["dense_hessian"])
        if kind == "libsvm":
            if not p["path"]:
                raise ConfigError("problem.kind=libsvm requires problem.path")
            ds = load_libsvm(p["path"])
            rng = np.random.default_rng(p["seed"])
            ds = split_dataset(ds, p["val_frac"], p["test_frac"], rng)
            if p["drop_pos_frac"] > 0 or p["flip_prob"] > 0:
                ds = corrupt(ds, p["drop_pos_frac"], p["flip_prob"], rng)
            return make_hyperweight(ds, m=p["m"], lambda_reg=p["lambda_reg"],
                                    temp_range=(p["temp_min"], p["temp_max"]),
                                    seed=p["seed"],
                                    dense_hessian=p["dense_hessian"])
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of "
                          f"{PROBLEM_KINDS}")

    def hyperparams(self, problem) -> HyperParams:
        h = dict(self.values["hyperparams"])
        if h["I"] is None:
            h["I"] = min(10, problem.m)
        if h["tau"] is None:
            h["tau"] = 2.0 / (3.0 * problem.constants.L_g)
        if h["tau_bar_t"] is None:
            h["tau_bar_t"] = h["tau_t"]
        hp = HyperParams(**h)
        hp.validate(problem.m)
        return hp

    def restart_multipliers(self) -> RestartMultipliers:
        r = self.values["restart"]
        return RestartMultipliers(c_eps=r["c_eps"], c_mix=r["c_mix"],
                                  c_step=r["c_step"], c_len=r["c_len"],
                                  eps1_floor=r["eps1_floor"])

    @property
    def seeds(self) -> list[int]:
        raw = self.values["run"]["seeds"]
        try:
            out = [int(tok) for tok in str(raw).split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"run.seeds must be comma-separated integers, "
                              f"got {raw!r}") from None
        if not out:
            raise ConfigError("run.seeds must be nonempty")
        return out

    def echo(self) -> dict:
        return {sec: dict(kv) for sec, kv in self.values.items()}


def parse_config(path: str | Path | None = None,
                 overrides: list[str] = ()) -> RunConfig:
    """Build a validated RunConfig from an INI-style file and/or
    'section.key=value' override strings (overrides win)."""
    values = {sec: {k: (None if d is ... else d) for k, (_, d) in kv.items()}
              for sec, kv in _SCHEMA.items()}
    required = {(sec, k) for sec, kv in _SCHEMA.items()
                for k, (_, d) in kv.items() if d is ...}
    seen = set()

    if path is not None:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for sec in cp.sections():
            if sec not in _SCHEMA:
                raise ConfigError(f"unknown section [{sec}] (known: "
                                  f"{', '.join(_SCHEMA)})")
            for key, raw in cp.items(sec):
                values[sec][key] = _coerce(sec, key, raw)
                seen.add((sec, key))

    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override {ov!r} is not section.key=value")
        dotted, raw = ov.split("=", 1)
        sec, key = dotted.split(".", 1)
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section '{sec}' in override {ov!r}")
        values[sec][key] = _coerce(sec, key, raw)
        seen.add((sec, key))

    missing = sorted(required - seen)
    if missing:
        names = ", ".join(f"{s}.{k}" for s, k in missing)
        raise ConfigError(f"missing required keys: {names}")

    algo = values["run"]["algorithm"]
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}; expected one of "
                          f"{ALGORITHMS}")
    kind = values["problem"]["kind"]
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of "
                          f"{PROBLEM_KINDS}")
    if (algo in _DENSE_HESSIAN_ALGOS and kind in ("hyperweight", "libsvm")
            and not values["problem"]["dense_hessian"]):
        raise ConfigError(
            f"algorithm {algo} estimates dense lower-level Hessians but the "
            "problem is configured with dense_hessian=false; use bsvrb-v2 / "
            "re-bsvrb-v2 or enable the dense oracle")
    for name in ("eval_every",):
        if values["run"][name] < 0:
            raise ConfigError(f"run.{name} must be >= 0")
    return RunConfig(algorithm=algo, values=values)
