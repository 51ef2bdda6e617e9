"""Distributed SM, EF21-P and MARINA-P simulated in one process.

The round loop itself lives in a backend (compiled kernel or the numpy
fallback in ``_pyloop``); this module validates configurations, resolves
stepsize constants, and wraps the raw kernel output into a ``MetricsLog``.

Row ``t`` of a log describes the state after ``t`` rounds: the stepsize
computed at that state, suboptimality at the evaluation point of the convergence analysis
(``w`` for EF21-P, the per-worker shifts for MARINA-P, ``x`` for SM) and at
``x``, cumulative server-to-worker bits per worker spent to reach it, the
Lyapunov value, and whether the message that produced the state was a dense
model broadcast.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import backend as _backend
from .compressors import CONTRACTIVE_KINDS, KIND_CODES, UNBIASED_KINDS, CompressorKind, CompressorSpec
from .linalg import seqsum, sqnorm
from .problem import Problem
from .rng import server_seed, worker_seed
from .schedules import (
    DegenerateOracleError,
    Schedule,
    ScheduleKind,
    TheoryConstantsEF21P,
    TheoryConstantsMarinaP,
    gamma0_optimal_ef21p,
    gamma0_optimal_marinap,
    gamma_constant_ef21p,
    gamma_constant_marinap,
    gamma_sm_baseline,
)

CSV_COLUMNS = ("round", "gamma", "f_subopt_w", "f_subopt_x", "bits_per_worker", "lyapunov", "full_round")
VALUE_BITS = 64


class ConfigError(ValueError):
    pass


class Method(str, enum.Enum):
    SM = "SM"
    EF21P = "EF21P"
    MARINAP = "MarinaP"


METHOD_CODES = {Method.SM: 0, Method.EF21P: 1, Method.MARINAP: 2}

SCHED_FIXED, SCHED_DECREASING, SCHED_POLYAK_EF, SCHED_POLYAK_MARINA = range(4)

STATUS_OK, STATUS_DIVERGED, STATUS_DEGENERATE, STATUS_DESYNC = range(4)


@dataclass(frozen=True)
class RunConfig:
    method: Method
    compressor: CompressorSpec
    schedule: Schedule
    p_full: float | None = None
    max_rounds: int = 1000
    bit_budget_per_worker: float = math.inf
    seed: int = 0
    log_lyapunov: bool = False
    log_every: int = 1
    track_average: bool = False
    verify_sync: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        if not self.bit_budget_per_worker > 0:
            raise ConfigError("bit_budget_per_worker must be positive")
        if self.p_full is not None and not 0.0 < self.p_full <= 1.0:
            raise ConfigError(f"p_full={self.p_full} outside (0, 1]")

    @property
    def effective_p(self) -> float:
        if self.p_full is not None:
            return float(self.p_full)
        return self.compressor.k / self.compressor.dim

    def replace(self, **changes) -> "RunConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return RunConfig(**values)


@dataclass
class MetricsLog:
    rounds: np.ndarray
    gamma: np.ndarray
    f_subopt_w: np.ndarray
    f_subopt_x: np.ndarray
    bits_per_worker: np.ndarray
    lyapunov: np.ndarray | None = None
    full_round: np.ndarray | None = None
    f_subopt_avg: np.ndarray | None = None
    status: int = STATUS_OK
    status_round: int = -1
    final_state: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return int(self.rounds.size)

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED

    @property
    def final_subopt(self) -> float:
        return float(self.f_subopt_w[-1]) if len(self) else math.nan

    def best_so_far(self, column: str = "f_subopt_w") -> np.ndarray:
        return np.minimum.accumulate(getattr(self, column))

    def to_csv(self, path=None) -> str:
        text = metrics_to_csv_text(self)
        if path is not None:
            write_text_atomic(path, text)
        return text


def _fmt(v) -> str:
    return "%.17g" % v


def metrics_to_csv_text(log: MetricsLog) -> str:
    buf = io.StringIO()
    cols = list(CSV_COLUMNS)
    if log.f_subopt_avg is not None:
        cols.append("f_subopt_avg")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in range(len(log)):
        row = [
            str(int(log.rounds[r])),
            _fmt(log.gamma[r]),
            _fmt(log.f_subopt_w[r]),
            _fmt(log.f_subopt_x[r]),
            _fmt(log.bits_per_worker[r]),
            "" if log.lyapunov is None else _fmt(log.lyapunov[r]),
            "" if log.full_round is None else str(int(log.full_round[r])),
        ]
        if log.f_subopt_avg is not None:
            row.append(_fmt(log.f_subopt_avg[r]))
        writer.writerow(row)
    return buf.getvalue()


def read_metrics_csv(path) -> MetricsLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[: len(CSV_COLUMNS)]) != CSV_COLUMNS:
            raise ValueError(f"{path}: not a metrics CSV (header {header})")
        rows = list(reader)

    def column(i, dtype=float):
        if any(r[i] == "" for r in rows):
            return None
        return np.array([dtype(r[i]) for r in rows])

    has_avg = len(header) > len(CSV_COLUMNS)
    return MetricsLog(
        rounds=np.array([int(r[0]) for r in rows], dtype=np.int64),
        gamma=column(1),
        f_subopt_w=column(2),
        f_subopt_x=column(3),
        bits_per_worker=column(4),
        lyapunov=column(5) if rows else None,
        full_round=column(6, int) if rows else None,
        f_subopt_avg=column(7) if has_avg else None,
    )


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- cost model and diagnostics ---------------------------------------------

def bits_for_message(nnz: int, d: int, dense: bool) -> float:
    """Dense: 64 bits per value. Sparse: value, sign bit and log2(d) index bits per entry."""
    if not 0 <= nnz <= d:
        raise ValueError(f"nnz={nnz} outside [0, {d}]")
    if dense:
        return float(VALUE_BITS * d)
    return nnz * (VALUE_BITS + 1 + math.log2(d))


def lyapunov_ef21p(x, w, x_star, constants: TheoryConstantsEF21P) -> float:
    x = np.asarray(x, dtype=np.float64)
    v = sqnorm(x - np.asarray(x_star))
    if constants.lyapunov_weight == 0.0:
        return v
    return v + constants.lyapunov_weight * sqnorm(np.asarray(w) - x)


def lyapunov_marinap(x, w_list, x_star, constants: TheoryConstantsMarinaP) -> float:
    x = np.asarray(x, dtype=np.float64)
    v = sqnorm(x - np.asarray(x_star))
    if constants.lyapunov_weight == 0.0:
        return v
    W = np.asarray(w_list, dtype=np.float64)
    drift = float(seqsum(seqsum((W - x) ** 2, axis=1))) / W.shape[0]
    return v + constants.lyapunov_weight * drift


# -- configuration resolution -----------------------------------------------

@dataclass
class LoopSpec:
    """Everything a backend needs to run one simulation; plain numbers and arrays only."""

    method: int
    comp: int
    k: int
    n: int
    d: int
    scales: np.ndarray
    shift: float
    x0: np.ndarray
    x_star: np.ndarray
    f_star: float
    sched: int
    factor: float
    gamma_base: float
    polyak_B: float
    polyak_ratio: float
    average_weighted: bool
    p_full: float
    max_rounds: int
    budget: float
    dense_bits: float
    sparse_bits: float
    server_seed: int
    worker_seeds: np.ndarray
    log_every: int
    log_lyapunov: bool
    lyapunov_weight: float
    track_average: bool
    verify_sync: bool
    max_rows: int


def theory_constants(problem: Problem, cfg: RunConfig):
    if cfg.method is Method.MARINAP:
        c = problem.constants
        return TheoryConstantsMarinaP.from_params(cfg.compressor.omega, cfg.effective_p, c.L_bar, c.L_tilde)
    alpha = 1.0 if cfg.method is Method.SM else cfg.compressor.alpha
    return TheoryConstantsEF21P.from_alpha(alpha)


def validate(problem: Problem, cfg: RunConfig) -> None:
    spec = cfg.compressor
    if spec.dim != problem.d or spec.n_workers != problem.n:
        raise ConfigError(
            f"compressor is set up for d={spec.dim}, n={spec.n_workers} but the problem has "
            f"d={problem.d}, n={problem.n}"
        )
    if cfg.method is Method.SM and spec.kind is not CompressorKind.IDENTITY:
        raise ConfigError("SM broadcasts the full model; use the Identity compressor")
    if cfg.method is Method.EF21P and spec.kind not in CONTRACTIVE_KINDS:
        raise ConfigError(f"EF21-P needs a contractive compressor (TopK/Identity), got {spec.kind.value}")
    if cfg.method is Method.MARINAP and spec.kind not in UNBIASED_KINDS:
        raise ConfigError(f"MARINA-P needs an unbiased compressor, got {spec.kind.value}")
    kind = cfg.schedule.kind
    if kind is ScheduleKind.POLYAK_MARINAP and cfg.method is not Method.MARINAP:
        raise ConfigError("PolyakMarinaP is only defined for MARINA-P")
    if kind is ScheduleKind.POLYAK_EF21P and cfg.method is Method.MARINAP:
        raise ConfigError("PolyakEF21P is not defined for MARINA-P; use PolyakMarinaP")


def expected_bits_per_round(cfg: RunConfig, d: int) -> float:
    dense = bits_for_message(d, d, dense=True)
    if cfg.method is Method.SM or cfg.compressor.kind is CompressorKind.IDENTITY:
        return dense
    sparse = bits_for_message(cfg.compressor.k, d, dense=False)
    if cfg.method is Method.MARINAP:
        p = cfg.effective_p
        return p * dense + (1.0 - p) * sparse
    return sparse


def default_horizon(cfg: RunConfig, d: int) -> int:
    """Horizon T for schedules that need one: the expected number of rounds the
    bit budget affords (capped by max_rounds), or max_rounds without a budget."""
    T = max(cfg.max_rounds, 1)
    if math.isfinite(cfg.bit_budget_per_worker):
        T = min(T, math.ceil(cfg.bit_budget_per_worker / expected_bits_per_round(cfg, d)))
    return max(T, 1)


def resolve_schedule(problem: Problem, cfg: RunConfig, consts) -> tuple[int, float, float, float]:
    """Map a Schedule to ``(code, gamma_base, polyak_B, polyak_ratio)``."""
    s = cfg.schedule
    V0 = problem.constants.R0_sq
    L0 = problem.constants.L0
    T = s.horizon_T if s.horizon_T is not None else default_horizon(cfg, problem.d)
    marina = cfg.method is Method.MARINAP
    if s.kind is ScheduleKind.FIXED_CONSTANT:
        return SCHED_FIXED, float(s.gamma), 0.0, 0.0
    if s.kind is ScheduleKind.SM_BASELINE:
        return SCHED_FIXED, gamma_sm_baseline(problem.constants.R0, L0, T), 0.0, 0.0
    if s.kind is ScheduleKind.CONSTANT_OPTIMAL:
        base = gamma_constant_marinap(consts, V0, T) if marina else gamma_constant_ef21p(consts, V0, L0, T)
        return SCHED_FIXED, base, 0.0, 0.0
    if s.kind is ScheduleKind.DECREASING:
        if s.gamma0 is not None:
            base = float(s.gamma0)
        elif marina:
            base = gamma0_optimal_marinap(consts, V0, T)
        else:
            base = gamma0_optimal_ef21p(consts, V0, L0, T)
        return SCHED_DECREASING, base, 0.0, 0.0
    if s.kind is ScheduleKind.POLYAK_EF21P:
        return SCHED_POLYAK_EF, 0.0, consts.B_star, 0.0
    return SCHED_POLYAK_MARINA, 0.0, 0.0, consts.ratio


def build_loop_spec(problem: Problem, cfg: RunConfig) -> LoopSpec:
    validate(problem, cfg)
    consts = theory_constants(problem, cfg)
    sched, base, B, ratio = resolve_schedule(problem, cfg, consts)
    spec = cfg.compressor
    d, n = problem.d, problem.n
    dense_bits = bits_for_message(d, d, dense=True)
    sparse_bits = bits_for_message(spec.k, d, dense=False)
    cheapest = dense_bits if spec.kind is CompressorKind.IDENTITY else min(dense_bits, sparse_bits)
    rounds_cap = cfg.max_rounds
    if math.isfinite(cfg.bit_budget_per_worker):
        rounds_cap = min(rounds_cap, int(math.ceil(cfg.bit_budget_per_worker / cheapest)) + 1)
    f_star = cfg.schedule.f_star if cfg.schedule.f_star is not None else problem.f_star
    return LoopSpec(
        method=METHOD_CODES[cfg.method],
        comp=KIND_CODES[spec.kind],
        k=spec.k,
        n=n,
        d=d,
        scales=np.ascontiguousarray(problem.scales, dtype=np.float64),
        shift=problem.shift,
        x0=np.ascontiguousarray(problem.x0, dtype=np.float64),
        x_star=np.ascontiguousarray(problem.x_star, dtype=np.float64),
        f_star=float(f_star),
        sched=sched,
        factor=float(cfg.schedule.factor),
        gamma_base=float(base),
        polyak_B=float(B),
        polyak_ratio=float(ratio),
        average_weighted=cfg.schedule.kind is ScheduleKind.DECREASING,
        p_full=cfg.effective_p if cfg.method is Method.MARINAP else 1.0,
        max_rounds=int(cfg.max_rounds),
        budget=float(cfg.bit_budget_per_worker),
        dense_bits=dense_bits,
        sparse_bits=sparse_bits,
        server_seed=server_seed(cfg.seed),
        worker_seeds=np.array([worker_seed(cfg.seed, i) for i in range(n)], dtype=np.uint64),
        log_every=int(cfg.log_every),
        log_lyapunov=bool(cfg.log_lyapunov),
        lyapunov_weight=float(consts.lyapunov_weight) if cfg.method is not Method.SM else 0.0,
        track_average=bool(cfg.track_average),
        verify_sync=bool(cfg.verify_sync),
        max_rows=rounds_cap // cfg.log_every + 3,
    )


def _to_log(raw: dict, spec: LoopSpec) -> MetricsLog:
    status = int(raw["status"])
    if status == STATUS_DEGENERATE:
        raise DegenerateOracleError(f"degenerate Polyak denominator at round {raw['status_round']}")
    if status == STATUS_DESYNC:
        raise AssertionError(f"server and worker shifts diverged at round {raw['status_round']}")
    m = int(raw["rows"])
    return MetricsLog(
        rounds=np.asarray(raw["round"][:m], dtype=np.int64),
        gamma=np.asarray(raw["gamma"][:m]),
        f_subopt_w=np.asarray(raw["f_w"][:m]),
        f_subopt_x=np.asarray(raw["f_x"][:m]),
        bits_per_worker=np.asarray(raw["bits"][:m]),
        lyapunov=np.asarray(raw["lyap"][:m]) if spec.log_lyapunov else None,
        full_round=np.asarray(raw["full"][:m], dtype=np.int8),
        f_subopt_avg=np.asarray(raw["avg"][:m]) if spec.track_average else None,
        status=status,
        status_round=int(raw["status_round"]),
        final_state={"x": raw["x"], "w": raw["w"], "W": raw["W"], "t": int(raw["t"])},
    )


def run(problem: Problem, cfg: RunConfig, backend: str | None = None) -> MetricsLog:
    spec = build_loop_spec(problem, cfg)
    return _to_log(_backend.get(backend).run_loop(spec), spec)


def _expect(cfg: RunConfig, method: Method) -> None:
    if cfg.method is not method:
        raise ConfigError(f"expected method {method.value}, config says {cfg.method.value}")


def run_sm(problem: Problem, cfg: RunConfig, backend: str | None = None) -> MetricsLog:
    _expect(cfg, Method.SM)
    return run(problem, cfg, backend)


def run_ef21p(problem: Problem, cfg: RunConfig, backend: str | None = None) -> MetricsLog:
    _expect(cfg, Method.EF21P)
    return run(problem, cfg, backend)


def run_marinap(problem: Problem, cfg: RunConfig, backend: str | None = None) -> MetricsLog:
    _expect(cfg, Method.MARINAP)
    return run(problem, cfg, backend)
