from .config import ALGORITHMS, RunConfig, parse_config
from .runner import run_experiment, run_gradcheck, run_verify, sweep_speedup

__all__ = ["ALGORITHMS", "RunConfig", "parse_config", "run_experiment",
           "run_gradcheck", "run_verify", "sweep_speedup"]
