"""Blockwise stochastic variance-reduced solvers for multi-block bilevel
optimization, with reference oracles and desk-scale benchmark problems."""

from .blocks import BlockMatrix, BlockVector
from .errors import ConfigError, InvariantViolation, OracleError, \
    ParameterError
from .estimators import MsvrTracker, ball_project, msvr_gamma, msvr_update, \
    spectral_floor, storm_update
from .hyperparams import HyperParams, theory_hyperparams
from .problem import Batch, CountingOracle, ProblemConstants, ProblemOracle, \
    block_sample
from .restart import RestartMultipliers, StageSchedule, build_schedule, \
    run_restarted
from .solver_v1 import StateV1, init_v1, run_v1, step_v1
from .solver_v2 import StateV2, init_v2, run_v2, step_v2
from .trace import Trace, TraceRow

__all__ = [
    "Batch", "BlockMatrix", "BlockVector", "ConfigError", "CountingOracle",
    "HyperParams", "InvariantViolation", "MsvrTracker", "OracleError",
    "ParameterError", "ProblemConstants", "ProblemOracle",
    "RestartMultipliers", "StageSchedule", "StateV1", "StateV2", "Trace",
    "TraceRow", "ball_project", "block_sample", "build_schedule", "init_v1",
    "init_v2", "msvr_gamma", "msvr_update", "run_restarted", "run_v1",
    "run_v2", "spectral_floor", "step_v1", "step_v2", "storm_update",
    "theory_hyperparams",
]
