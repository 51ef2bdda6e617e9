"""Deterministic simulator of compressed server-to-worker subgradient methods.

Minimizes f(x) = (1/n) sum_i ||A_i x||_1 with the subgradient method (SM),
EF21-P (error feedback, TopK) and MARINA-P (unbiased RandK/PermK with random
full synchronizations), and accounts for the bits the server broadcasts.
"""

from .compressors import CompressorKind, CompressorSpec
from .linalg import SymTridiagMatrix
from .optimizers import ConfigError, Method, MetricsLog, RunConfig, run, run_ef21p, run_marinap, run_sm
from .problem import GenConfig, Problem, generate
from .schedules import FACTOR_GRID, Schedule, ScheduleKind

__version__ = "0.1.0"

__all__ = [
    "CompressorKind",
    "CompressorSpec",
    "ConfigError",
    "FACTOR_GRID",
    "GenConfig",
    "Method",
    "MetricsLog",
    "Problem",
    "RunConfig",
    "Schedule",
    "ScheduleKind",
    "SymTridiagMatrix",
    "generate",
    "run",
    "run_ef21p",
    "run_marinap",
    "run_sm",
]
