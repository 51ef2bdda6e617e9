"""Command line interface: ``subgradfed generate|run|tune|matrix|report``.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure,
4 numerical failure (divergence or a degenerate Polyak step).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import harness, problem as problem_mod, report
from .compressors import CompressorError, CompressorKind, CompressorSpec
from .optimizers import STATUS_DIVERGED, ConfigError, Method, RunConfig, run, write_text_atomic
from .problem import GenConfig
from .schedules import FACTOR_GRID, DegenerateOracleError, Schedule, ScheduleError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

REQUIRED = object()

# key -> (accepted types, default, description)
GEN_SCHEMA = {
    "n": ((int,), REQUIRED, "number of workers"),
    "d": ((int,), REQUIRED, "model dimension"),
    "mu": ((float,), 1e-6, "smallest eigenvalue of the averaged matrix"),
    "noise_scale": ((float,), 0.0, "heterogeneity s: nu_i = 1 + s * xi_i"),
    "seed": ((int,), 0, "generator seed"),
}

RUN_SCHEMA = {
    "problem": ((dict,), None, "inline generator config (keys as for `generate`), used without --problem"),
    "method": ((str,), REQUIRED, "SM | EF21P | MarinaP"),
    "compressor": ((str,), None, "TopK | SameRandK | IndRandK | PermK | Identity (SM: Identity)"),
    "k": ((int,), None, "coordinates per compressed message; default d/n"),
    "schedule": ((str,), REQUIRED,
                 "ConstantOptimal | Decreasing | PolyakEF21P | PolyakMarinaP | SMBaseline | FixedConstant"),
    "factor": ((float,), 1.0, "multiplier applied to the stepsize"),
    "horizon_T": ((int,), None, "horizon for ConstantOptimal/Decreasing/SMBaseline; default from budget"),
    "f_star": ((float,), None, "optimal value for Polyak steps; default the problem's optimum 0"),
    "gamma0": ((float,), None, "Decreasing: initial stepsize; default the theory-optimal value"),
    "gamma": ((float,), None, "FixedConstant: the stepsize"),
    "p_full": ((float,), None, "MARINA-P full-sync probability; default k/d"),
    "max_rounds": ((int,), 1000, "round limit"),
    "bit_budget_per_worker": ((float,), None, "stop once this many bits per worker are spent; default none"),
    "seed": ((int,), 0, "run seed (compressor and Bernoulli draws)"),
    "log_lyapunov": ((bool,), False, "log the Lyapunov value"),
    "log_every": ((int,), 1, "log every this many rounds (the last round is always logged)"),
    "track_average": ((bool,), False, "log suboptimality of the averaged iterates"),
    "verify_sync": ((bool,), False, "check worker copies of the shift every round"),
}

TUNE_SCHEMA = dict(RUN_SCHEMA)
TUNE_SCHEMA["factor_grid"] = ((list,), list(FACTOR_GRID), "factors to try; default 2^-9 .. 2^7")

MATRIX_SCHEMA = {
    "preset": ((str,), None, "desk | full: start from a preset and override the keys below"),
    "dims": ((list,), REQUIRED, "model dimensions d"),
    "node_counts": ((list,), REQUIRED, "worker counts n (each must divide every d)"),
    "noise_scales": ((list,), REQUIRED, "heterogeneity levels s"),
    "methods": ((list,), "all eight method configurations", "list of {method, compressor, schedule}"),
    "factor_grid": ((list,), list(FACTOR_GRID), "tuning factors"),
    "budgets": ((dict,), REQUIRED, "bits per worker, keyed by n"),
    "seeds": ((list,), [0], "replicate seeds"),
    "mu": ((float,), 1e-6, "generator mu"),
    "log_every": ((int,), 1, "CSV logging stride"),
    "max_rounds": ((int,), 10**8, "round cap on top of the budget"),
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def schema_help(schema) -> str:
    lines = ["config keys (JSON object; unknown keys are rejected):"]
    for key, (types, default, desc) in schema.items():
        dflt = "required" if default is REQUIRED else f"default {json.dumps(default)}"
        lines.append(f"  {key:<22} {'/'.join(t.__name__ for t in types):<6} {dflt}. {desc}")
    return "\n".join(lines)


def _type_ok(value, types) -> bool:
    for t in types:
        if t is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if t is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if t not in (int, float) and isinstance(value, t):
            return True
    return False


def validate(data, schema, where="config") -> dict:
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG, f"{where}: expected a JSON object")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise CliError(EXIT_CONFIG, f"{where}: unknown keys {unknown}")
    out = {}
    for key, (types, default, _) in schema.items():
        if key not in data or data[key] is None:
            if default is REQUIRED:
                raise CliError(EXIT_CONFIG, f"{where}: missing required key {key!r}")
            out[key] = default
            continue
        if not _type_ok(data[key], types):
            raise CliError(EXIT_CONFIG, f"{where}: {key!r} must be {'/'.join(t.__name__ for t in types)}")
        out[key] = data[key]
    return out


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: invalid JSON ({exc})") from None


def _gen_config(data, seed_override=None, where="config") -> GenConfig:
    cfg = validate(data, GEN_SCHEMA, where)
    if seed_override is not None:
        cfg["seed"] = seed_override
    try:
        return GenConfig(**cfg)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"{where}: {exc}") from None


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise CliError(EXIT_IO, f"output directory {parent} does not exist")


def constants_table(p) -> str:
    c = p.constants
    rows = [
        ("n", p.n), ("d", p.d), ("shift", p.shift), ("L0", c.L0), ("L_bar", c.L_bar),
        ("L_tilde", c.L_tilde), ("sigma_A", c.sigma_A), ("R0^2", c.R0_sq), ("f*", p.f_star),
    ]
    return "\n".join(f"{name:<8} {value:.6g}" if isinstance(value, float) else f"{name:<8} {value}"
                     for name, value in rows)


# -- commands -------------------------------------------------------------

def cmd_generate(args) -> int:
    if not args.config:
        raise CliError(EXIT_CONFIG, "generate needs --config")
    cfg = _gen_config(read_json(args.config), args.seed)
    if args.out:
        _ensure_parent(args.out)
    p = problem_mod.generate(cfg)
    if args.out:
        try:
            write_text_atomic(args.out, json.dumps(problem_mod.to_json_dict(p), indent=1) + "\n")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror}") from None
    print(constants_table(p))
    return EXIT_OK


def _load_problem(args, cfg):
    if args.problem:
        try:
            return problem_mod.load(args.problem)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {args.problem}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise CliError(EXIT_CONFIG, f"{args.problem}: {exc}") from None
    if cfg["problem"] is None:
        raise CliError(EXIT_CONFIG, "no problem: pass --problem or put a 'problem' object in the config")
    return problem_mod.generate(_gen_config(cfg["problem"], where="config.problem"))


def build_run_config(cfg: dict, p, seed_override=None) -> RunConfig:
    try:
        method = Method(cfg["method"])
        kind = cfg["compressor"]
        if kind is None:
            if method is not Method.SM:
                raise ConfigError(f"'compressor' is required for {method.value}")
            kind = CompressorKind.IDENTITY.value
        k = cfg["k"] if cfg["k"] is not None else max(p.d // p.n, 1)
        spec = CompressorSpec(kind, k, p.d, p.n)
        schedule = Schedule(cfg["schedule"], float(cfg["factor"]), cfg["horizon_T"], cfg["f_star"],
                            cfg["gamma0"], cfg["gamma"])
        budget = cfg["bit_budget_per_worker"]
        return RunConfig(
            method=method,
            compressor=spec,
            schedule=schedule,
            p_full=cfg["p_full"],
            max_rounds=cfg["max_rounds"],
            bit_budget_per_worker=math.inf if budget is None else float(budget),
            seed=cfg["seed"] if seed_override is None else seed_override,
            log_lyapunov=cfg["log_lyapunov"],
            log_every=cfg["log_every"],
            track_average=cfg["track_average"],
            verify_sync=cfg["verify_sync"],
        )
    except (ValueError, ConfigError, CompressorError, ScheduleError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid run config: {exc}") from None


def _execute(p, run_cfg):
    from .optimizers import validate as validate_run

    try:
        validate_run(p, run_cfg)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    try:
        return run(p, run_cfg)
    except DegenerateOracleError as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from None
    except ScheduleError as exc:
        raise CliError(EXIT_CONFIG, f"stepsize cannot be formed for this problem: {exc}") from None


def _write_csv(log, path):
    try:
        log.to_csv(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror}") from None


def cmd_run(args) -> int:
    if not args.config:
        raise CliError(EXIT_CONFIG, "run needs --config")
    cfg = validate(read_json(args.config), RUN_SCHEMA)
    p = _load_problem(args, cfg)
    run_cfg = build_run_config(cfg, p, args.seed)
    if args.out:
        _ensure_parent(args.out)
    log = _execute(p, run_cfg)
    if args.out:
        _write_csv(log, args.out)
    else:
        sys.stdout.write(log.to_csv())
    if log.status == STATUS_DIVERGED:
        print(f"diverged: non-finite loss at round {log.status_round}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"rounds {int(log.rounds[-1])}  bits/worker {log.bits_per_worker[-1]:.6g}  "
          f"f_subopt_w {log.f_subopt_w[-1]:.6g}  f_subopt_x {log.f_subopt_x[-1]:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_tune(args) -> int:
    if not args.config:
        raise CliError(EXIT_CONFIG, "tune needs --config")
    cfg = validate(read_json(args.config), TUNE_SCHEMA)
    grid = cfg.pop("factor_grid")
    if not grid or not all(_type_ok(f, (float,)) and f > 0 for f in grid):
        raise CliError(EXIT_CONFIG, "factor_grid must be a nonempty list of positive numbers")
    p = _load_problem(args, cfg)
    run_cfg = build_run_config(cfg, p, args.seed)
    from .optimizers import validate as validate_run

    try:
        validate_run(p, run_cfg)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if args.out:
        _ensure_parent(args.out)
    try:
        result = harness.tune(p, run_cfg, grid, threads=args.threads)
    except harness.TuneError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    for f, s in sorted(result.per_factor.items()):
        mark = "*" if f == result.best_factor else " "
        status = f"{s['final_subopt']:.6g}" if s["ok"] else s["error"]
        print(f"{mark} factor {f:<12g} final_subopt {status}")
    if args.out:
        _write_csv(result.best_log, args.out)
    return EXIT_OK


def _matrix_from_config(data, seed_override=None) -> harness.ExperimentMatrix:
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG, "matrix config: expected a JSON object")
    unknown = sorted(set(data) - set(MATRIX_SCHEMA))
    if unknown:
        raise CliError(EXIT_CONFIG, f"matrix config: unknown keys {unknown}")
    preset = data.get("preset")
    if preset is not None:
        if preset not in ("desk", "full"):
            raise CliError(EXIT_CONFIG, f"unknown preset {preset!r}; use desk or full")
        base = (harness.ExperimentMatrix.desk() if preset == "desk" else harness.ExperimentMatrix.full())
        merged = base.to_json_dict()
    else:
        merged = {}
    for key, value in data.items():
        if key == "preset":
            continue
        types = MATRIX_SCHEMA[key][0]
        if not _type_ok(value, types):
            raise CliError(EXIT_CONFIG, f"matrix config: {key!r} must be {types[0].__name__}")
        merged[key] = value
    if seed_override is not None:
        merged["seeds"] = [seed_override]
    try:
        return harness.ExperimentMatrix.from_json_dict(merged)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def cmd_matrix(args) -> int:
    data = read_json(args.config) if args.config else {"preset": "desk"}
    matrix = _matrix_from_config(data, args.seed)
    out = args.out or "matrix_out"
    try:
        manifest = harness.run_matrix(matrix, out, threads=args.threads)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write results under {out}: {exc.strerror}") from None
    failed = [c for c in manifest["cells"] if c["error"]]
    for c in manifest["cells"]:
        res = c["error"] or f"factor {c['best_factor']:g}  final_subopt {c['final_subopt']}"
        print(f"d={c['d']} n={c['n']} s={c['s']:g} seed={c['seed']} {c['label']}: {res}")
    print(f"manifest: {os.path.join(out, 'manifest.json')} ({len(failed)} failed cells)")
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.inputs:
        raise CliError(EXIT_CONFIG, "report needs at least one manifest or CSV")
    try:
        curves = report.load_curves(args.inputs, args.column)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read input: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if not curves:
        raise CliError(EXIT_CONFIG, "no curves found in the inputs")
    out = args.out or "report.svg"
    summary_path = args.summary or os.path.splitext(out)[0] + ".json"
    _ensure_parent(out)
    svg = report.render_svg(curves, args.title or "")
    summary = report.summarize(curves, args.column)
    try:
        write_text_atomic(out, svg)
        write_text_atomic(summary_path, json.dumps(summary, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report: {exc.strerror}") from None
    print(f"{len(curves)} curves -> {out}, {summary_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subgradfed", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, schema=None):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--seed", type=int, help="override the seed in the config")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        if schema is not None:
            sp.epilog = schema_help(schema)

    fmt = argparse.RawDescriptionHelpFormatter
    sp = sub.add_parser("generate", help="generate a synthetic problem", formatter_class=fmt)
    common(sp, GEN_SCHEMA)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("run", help="run one method and write its metrics CSV", formatter_class=fmt)
    common(sp, RUN_SCHEMA)
    sp.add_argument("--problem", help="problem JSON written by `generate`")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("tune", help="grid-search the stepsize factor", formatter_class=fmt)
    common(sp, TUNE_SCHEMA)
    sp.add_argument("--problem", help="problem JSON written by `generate`")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("matrix", help="tune and run an experiment matrix", formatter_class=fmt)
    common(sp, MATRIX_SCHEMA)
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("report", help="plot CSVs or a manifest as SVG", formatter_class=fmt)
    common(sp)
    sp.add_argument("inputs", nargs="*", help="manifest.json files and/or metrics CSVs")
    sp.add_argument("--summary", help="summary JSON path (default: next to the SVG)")
    sp.add_argument("--column", default="f_subopt_w", choices=["f_subopt_w", "f_subopt_x", "f_subopt_avg"],
                    help="metric to plot (default f_subopt_w)")
    sp.add_argument("--title", help="plot title")
    sp.epilog = "The SVG is byte-reproducible: fixed palette and formatting, no timestamps."
    sp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
