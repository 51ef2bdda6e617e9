"""Time the compiled round loop against the numpy fallback.

    python3 benchmarks/bench_backends.py [--rounds 2000] [--dims 100 1000] [--repeat 3]

Both backends must produce identical logs; the script checks that before
reporting a speedup.
"""

import argparse
import time

import numpy as np

from subgradfed import CompressorSpec, GenConfig, RunConfig, Schedule, generate, run
from subgradfed import backend

CASES = (
    ("SM", "Identity", "SMBaseline"),
    ("EF21P", "TopK", "PolyakEF21P"),
    ("MarinaP", "PermK", "ConstantOptimal"),
    ("MarinaP", "IndRandK", "PolyakMarinaP"),
)


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    cols = ("rounds", "gamma", "f_subopt_w", "f_subopt_x", "bits_per_worker")
    return all(np.array_equal(getattr(a, c), getattr(b, c), equal_nan=True) for c in cols)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--dims", type=int, nargs="+", default=[100, 1000])
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = backend.available()
    if "cython" not in names:
        print("compiled kernel not built; only the python backend is available")
    print(f"{'d':>6} {'method':<8} {'compressor':<10} " + " ".join(f"{n + ' [s]':>12}" for n in names)
          + ("   speedup" if len(names) == 2 else ""))
    for d in args.dims:
        p = generate(GenConfig(n=args.n, d=d, noise_scale=1.0, seed=0))
        for method, kind, sched in CASES:
            k = d if kind == "Identity" else d // args.n
            cfg = RunConfig(method, CompressorSpec(kind, k, d, args.n), Schedule(sched), max_rounds=args.rounds,
                            seed=1)
            times, logs = [], []
            for name in names:
                t, log = best_time(lambda: run(p, cfg, name), args.repeat)
                times.append(t)
                logs.append(log)
            if len(logs) == 2 and not same(*logs):
                raise SystemExit(f"backends disagree on d={d} {method}/{kind}")
            line = f"{d:>6} {method:<8} {kind:<10} " + " ".join(f"{t:>12.4f}" for t in times)
            if len(times) == 2:
                line += f"   {times[1] / times[0]:7.1f}x"
            print(line)


if __name__ == "__main__":
    main()
