"""Experiment orchestration: factor tuning, bit budgets, and the method x dataset matrix.

Every cell of a matrix uses K = d/n coordinates per compressed message and,
for MARINA-P, full-sync probability p = K/d. Problem and run seeds are derived
from (matrix seed, cell coordinates), so adding cells never changes the
results of existing ones.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .compressors import CompressorError, CompressorKind, CompressorSpec
from .optimizers import (
    STATUS_OK,
    ConfigError,
    Method,
    MetricsLog,
    RunConfig,
    run,
    write_text_atomic,
)
from .problem import GenConfig, Problem, generate
from .rng import derive_seed
from .schedules import FACTOR_GRID, DegenerateOracleError, Schedule, ScheduleError, ScheduleKind


class TuneError(RuntimeError):
    pass


@dataclass(frozen=True)
class MethodEntry:
    method: Method
    compressor: CompressorKind
    schedule: ScheduleKind

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "compressor", CompressorKind(self.compressor))
        object.__setattr__(self, "schedule", ScheduleKind(self.schedule))

    @property
    def label(self) -> str:
        return f"{self.method.value}-{self.compressor.value}-{self.schedule.value}"

    def to_dict(self) -> dict:
        return {"method": self.method.value, "compressor": self.compressor.value, "schedule": self.schedule.value}

    @classmethod
    def from_dict(cls, data: dict) -> "MethodEntry":
        extra = set(data) - {"method", "compressor", "schedule"}
        if extra:
            raise ConfigError(f"method entry has unknown keys: {sorted(extra)}")
        try:
            return cls(data["method"], data["compressor"], data["schedule"])
        except KeyError as exc:
            raise ConfigError(f"method entry is missing {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def default_methods() -> tuple:
    """EF21-P/TopK and MARINA-P with the three RandK/PermK deployments, constant and Polyak stepsizes."""
    out = []
    for polyak in (False, True):
        ef = ScheduleKind.POLYAK_EF21P if polyak else ScheduleKind.CONSTANT_OPTIMAL
        mp = ScheduleKind.POLYAK_MARINAP if polyak else ScheduleKind.CONSTANT_OPTIMAL
        out.append(MethodEntry(Method.EF21P, CompressorKind.TOPK, ef))
        for kind in (CompressorKind.SAME_RANDK, CompressorKind.IND_RANDK, CompressorKind.PERMK):
            out.append(MethodEntry(Method.MARINAP, kind, mp))
    return tuple(out)


MATRIX_KEYS = ("dims", "node_counts", "noise_scales", "methods", "factor_grid", "budgets", "seeds", "mu",
               "log_every", "max_rounds")


@dataclass(frozen=True)
class ExperimentMatrix:
    dims: tuple
    node_counts: tuple
    noise_scales: tuple
    methods: tuple = field(default_factory=default_methods)
    factor_grid: tuple = FACTOR_GRID
    budgets: dict = field(default_factory=dict)  # n -> bits per worker
    seeds: tuple = (0,)
    mu: float = 1e-6
    log_every: int = 1
    max_rounds: int = 10**8

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "node_counts", tuple(int(v) for v in self.node_counts))
        object.__setattr__(self, "noise_scales", tuple(float(v) for v in self.noise_scales))
        object.__setattr__(self, "methods", tuple(
            m if isinstance(m, MethodEntry) else MethodEntry.from_dict(m) for m in self.methods))
        object.__setattr__(self, "factor_grid", tuple(float(v) for v in self.factor_grid))
        object.__setattr__(self, "budgets", {int(k): float(v) for k, v in self.budgets.items()})
        object.__setattr__(self, "seeds", tuple(int(v) for v in self.seeds))
        for name in ("dims", "node_counts", "noise_scales", "methods", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"matrix field {name} is empty")
        if not self.factor_grid or any(not f > 0 for f in self.factor_grid):
            raise ConfigError("factor_grid must be a nonempty list of positive numbers")
        for d in self.dims:
            for n in self.node_counts:
                if d % n:
                    raise ConfigError(f"d={d} is not divisible by n={n} (needed for K = d/n and PermK)")
        missing = [n for n in self.node_counts if n not in self.budgets]
        if missing:
            raise ConfigError(f"no bit budget for n in {missing}")
        if any(not b > 0 for b in self.budgets.values()):
            raise ConfigError("budgets must be positive")
        if self.log_every < 1 or self.max_rounds < 1:
            raise ConfigError("log_every and max_rounds must be >= 1")

    @classmethod
    def desk(cls) -> "ExperimentMatrix":
        return cls(dims=(200,), node_counts=(10,), noise_scales=(0.1, 1.0), budgets={10: 1e7})

    @classmethod
    def full(cls) -> "ExperimentMatrix":
        return cls(dims=(1000,), node_counts=(10, 100), noise_scales=(0.1, 1.0, 10.0),
                   budgets={10: 3.5e8, 100: 3.5e7}, log_every=10)

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "node_counts": list(self.node_counts),
            "noise_scales": list(self.noise_scales),
            "methods": [m.to_dict() for m in self.methods],
            "factor_grid": list(self.factor_grid),
            "budgets": {str(k): v for k, v in sorted(self.budgets.items())},
            "seeds": list(self.seeds),
            "mu": self.mu,
            "log_every": self.log_every,
            "max_rounds": self.max_rounds,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentMatrix":
        unknown = set(data) - set(MATRIX_KEYS)
        if unknown:
            raise ConfigError(f"matrix config has unknown keys: {sorted(unknown)}")
        required = {"dims", "node_counts", "noise_scales", "budgets"}
        missing = required - set(data)
        if missing:
            raise ConfigError(f"matrix config is missing keys: {sorted(missing)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid matrix config: {exc}") from None

    def cells(self):
        for d in self.dims:
            for n in self.node_counts:
                for s in self.noise_scales:
                    for seed in self.seeds:
                        for entry in self.methods:
                            yield d, n, s, seed, entry


@dataclass
class TuneResult:
    best_factor: float
    final_subopt: float
    per_factor: dict  # factor -> summary dict
    best_log: MetricsLog = field(repr=False)
    config: RunConfig = field(repr=False)


def cell_config(entry: MethodEntry, d: int, n: int, budget: float, seed: int, factor: float = 1.0,
                max_rounds: int = 10**8, log_every: int = 1) -> RunConfig:
    """RunConfig for one matrix cell with K = d/n and p = K/d."""
    if d % n:
        raise ConfigError(f"d={d} is not divisible by n={n}")
    K = d // n
    spec = CompressorSpec(entry.compressor, K, d, n)
    return RunConfig(
        method=entry.method,
        compressor=spec,
        schedule=Schedule(entry.schedule, factor),
        p_full=K / d if entry.method is Method.MARINAP else None,
        max_rounds=max_rounds,
        bit_budget_per_worker=budget,
        seed=seed,
        log_every=log_every,
    )


def _summary(factor: float, log: MetricsLog | None, error: str | None = None) -> dict:
    if log is None:
        return {"factor": factor, "final_subopt": math.nan, "ok": False, "error": error}
    final = log.final_subopt
    ok = log.status == STATUS_OK and math.isfinite(final)
    return {
        "factor": factor,
        "final_subopt": final,
        "final_subopt_x": float(log.f_subopt_x[-1]) if len(log) else math.nan,
        "rounds": int(log.rounds[-1]) if len(log) else 0,
        "bits": float(log.bits_per_worker[-1]) if len(log) else 0.0,
        "ok": ok,
        "error": None if ok else f"diverged at round {log.status_round}",
    }


def tune(problem: Problem, base_cfg: RunConfig, factor_grid=FACTOR_GRID, threads: int = 1,
         backend: str | None = None) -> TuneResult:
    """Run every factor to the budget; keep the smallest final suboptimality (ties: smaller factor)."""
    grid = sorted({float(f) for f in factor_grid})
    if not grid:
        raise ValueError("factor grid is empty")

    def one(factor):
        cfg = base_cfg.replace(schedule=base_cfg.schedule.with_factor(factor))
        try:
            return factor, cfg, run(problem, cfg, backend), None
        except DegenerateOracleError as exc:
            return factor, cfg, None, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(f) for f in grid]

    per_factor = {}
    best = None
    for factor, cfg, log, err in results:
        summ = _summary(factor, log, err)
        per_factor[factor] = summ
        if summ["ok"] and (best is None or summ["final_subopt"] < best[0]):
            best = (summ["final_subopt"], factor, log, cfg)
    if best is None:
        label = f"{base_cfg.method.value}/{base_cfg.compressor.kind.value}/{base_cfg.schedule.kind.value}"
        raise TuneError(f"every factor in the grid diverged for {label}")
    return TuneResult(best[1], best[0], per_factor, best[2], best[3])


def cell_seeds(matrix_seed: int, d: int, n: int, s: float, label: str) -> tuple[int, int]:
    """(problem seed, run seed); the problem seed ignores the method so all methods share data."""
    return derive_seed(matrix_seed, "problem", d, n, s), derive_seed(matrix_seed, "run", d, n, s, label)


def cell_dir(d: int, n: int, s: float, seed: int) -> str:
    return f"cells/d{d}_n{n}_s{s!r}_seed{seed}"


def _json_float(v):
    return v if isinstance(v, float) and math.isfinite(v) else None


def run_cell(matrix: ExperimentMatrix, d, n, s, seed, entry, problem: Problem, out_dir, backend=None) -> dict:
    _, run_seed = cell_seeds(seed, d, n, s, entry.label)
    record = {
        "d": d, "n": n, "s": s, "seed": seed,
        "method": entry.method.value,
        "compressor": entry.compressor.value,
        "schedule": entry.schedule.value,
        "label": entry.label,
        "best_factor": None,
        "final_subopt": None,
        "final_subopt_x": None,
        "final_bits": None,
        "csv_path": None,
        "error": None,
    }
    try:
        base = cell_config(entry, d, n, matrix.budgets[n], run_seed, 1.0, matrix.max_rounds, matrix.log_every)
        result = tune(problem, base, matrix.factor_grid, backend=backend)
    except (ConfigError, CompressorError, ScheduleError, TuneError) as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    rel = f"{cell_dir(d, n, s, seed)}/{entry.label}.csv"
    path = os.path.join(out_dir, *rel.split("/"))
    os.makedirs(os.path.dirname(path), exist_ok=True)
    result.best_log.to_csv(path)
    log = result.best_log
    record.update(
        best_factor=result.best_factor,
        final_subopt=_json_float(result.final_subopt),
        final_subopt_x=_json_float(float(log.f_subopt_x[-1])),
        final_bits=float(log.bits_per_worker[-1]),
        csv_path=rel,
        tuning={repr(f): _json_float(v["final_subopt"]) for f, v in result.per_factor.items()},
    )
    return record


def run_matrix(matrix: ExperimentMatrix, out_dir, threads: int = 1, backend: str | None = None) -> dict:
    """Tune and run every cell, write one CSV per cell and ``manifest.json``; returns the manifest."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    problems = {}
    for d, n, s, seed, _ in matrix.cells():
        key = (d, n, s, seed)
        if key not in problems:
            pseed, _ = cell_seeds(seed, d, n, s, "")
            problems[key] = generate(GenConfig(n=n, d=d, mu=matrix.mu, noise_scale=s, seed=pseed))
    cells = list(matrix.cells())

    def work(cell):
        d, n, s, seed, entry = cell
        return run_cell(matrix, d, n, s, seed, entry, problems[(d, n, s, seed)], out_dir, backend)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(work, cells))
    else:
        records = [work(c) for c in cells]
    manifest = {"matrix_config": matrix.to_json_dict(), "cells": records}
    write_text_atomic(os.path.join(out_dir, "manifest.json"), manifest_text(manifest))
    return manifest


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=1, sort_keys=True, allow_nan=False) + "\n"


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "cells" not in data:
        raise ValueError(f"{path}: not a manifest")
    return data
