"""Pure numpy round loop.

This is the reference implementation of the simulation and the fallback when
the compiled kernel is unavailable. ``_ckernel.pyx`` mirrors it operation for
operation (same sequential reductions, same random draws), so both produce
bitwise identical logs.
"""

from __future__ import annotations

import math

import numpy as np

from . import compressors as C
from .linalg import matvec_batch, seqsum, sqnorm
from .problem import sign
from .rng import SplitMix64
from .schedules import DegenerateOracleError, polyak_ef21p_value, polyak_marinap_value

SM, EF21P, MARINAP = 0, 1, 2
IDENTITY, TOPK, SAME_RANDK, IND_RANDK, PERMK = 0, 1, 2, 3, 4
FIXED, DECREASING, POLYAK_EF, POLYAK_MARINA = 0, 1, 2, 3
OK, DIVERGED, DEGENERATE, DESYNC = 0, 1, 2, 3


def _f_rows(scales, shift, P):
    """Per-row objective values and A_i P_i."""
    Y = matvec_batch(scales, shift, P)
    return seqsum(np.abs(Y), axis=1), Y


def run_loop(s) -> dict:
    # overflow is reported through the DIVERGED status, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(s)


def _run(s) -> dict:
    n, d, k = s.n, s.d, s.k
    scales = s.scales
    x = s.x0.copy()
    w = s.x0.copy() if s.method == EF21P else None
    W = np.tile(s.x0, (n, 1))
    server = SplitMix64(s.server_seed)
    workers = [SplitMix64(int(v)) for v in s.worker_seeds]

    S = np.zeros((n, d)) if s.track_average else None
    sumw = 0.0
    rows = {key: [] for key in ("round", "gamma", "f_w", "f_x", "bits", "lyap", "full", "avg")}
    status, status_round = OK, -1
    bits = 0.0
    prev_full = False
    x_finite = True
    t = 0

    while True:
        P = np.broadcast_to(x, (n, d)) if s.method == SM else W
        fi, Y = _f_rows(scales, s.shift, P)
        f_eval = float(seqsum(fi)) / n
        gap = f_eval - s.f_star
        diverged = not (math.isfinite(f_eval) and x_finite)

        gamma = math.nan
        if not diverged:
            G = matvec_batch(scales, s.shift, sign(Y))
            gbar = seqsum(G, axis=0) / n
            try:
                if s.sched == FIXED:
                    gamma = s.factor * s.gamma_base
                elif s.sched == DECREASING:
                    gamma = s.factor * s.gamma_base / math.sqrt(t + 1)
                elif s.sched == POLYAK_EF:
                    gamma = polyak_ef21p_value(s.polyak_B, gap, sqnorm(gbar), s.factor)
                else:
                    mean_sq = float(seqsum(seqsum(G * G, axis=1))) / n
                    gamma = polyak_marinap_value(s.polyak_ratio, gap, sqnorm(gbar), mean_sq, s.factor)
            except DegenerateOracleError:
                status, status_round = DEGENERATE, t
                break
            diverged = not math.isfinite(gamma)

        if s.track_average and not diverged:
            weight = gamma if s.average_weighted else 1.0
            S = S + weight * P
            sumw = sumw + weight

        terminal = diverged or t == s.max_rounds or bits >= s.budget
        if terminal or t % s.log_every == 0:
            if s.method == SM:
                f_x = f_eval
            else:
                fx_i, _ = _f_rows(scales, s.shift, np.broadcast_to(x, (n, d)))
                f_x = float(seqsum(fx_i)) / n
            lyap = math.nan
            if s.log_lyapunov:
                lyap = sqnorm(x - s.x_star)
                if s.lyapunov_weight != 0.0:
                    if s.method == EF21P:
                        drift = sqnorm(w - x)
                    else:
                        drift = float(seqsum(seqsum((W - x) ** 2, axis=1))) / n
                    lyap = lyap + s.lyapunov_weight * drift
            avg = math.nan
            if s.track_average and sumw > 0.0:
                fa, _ = _f_rows(scales, s.shift, S / sumw)
                avg = float(seqsum(fa)) / n - s.f_star
            rows["round"].append(t)
            rows["gamma"].append(gamma)
            rows["f_w"].append(gap)
            rows["f_x"].append(f_x - s.f_star)
            rows["bits"].append(bits)
            rows["lyap"].append(lyap)
            rows["full"].append(1 if prev_full else 0)
            rows["avg"].append(avg)
        if diverged:
            status, status_round = DIVERGED, t
            break
        if terminal:
            break

        x_new = x - gamma * gbar
        if s.method == SM:
            bits += s.dense_bits
            prev_full = True
        elif s.method == EF21P:
            if s.comp == IDENTITY:
                w = x_new.copy()
                W[:] = x_new
                bits += s.dense_bits
                prev_full = True
            else:
                diff = x_new - w
                idx = C.topk_indices(diff, k)
                delta = diff[idx]
                w[idx] = w[idx] + delta
                W[:, idx] = W[:, idx] + delta
                bits += s.sparse_bits
                prev_full = False
            if s.verify_sync and not all(np.array_equal(W[i], w) for i in range(n)):
                status, status_round = DESYNC, t + 1
                break
        else:
            full = server.uniform() < s.p_full
            if full or s.comp == IDENTITY:
                W[:] = x_new
                bits += s.dense_bits
            else:
                diff = x_new - x
                if s.comp == SAME_RANDK:
                    idx = C.randk_indices(d, k, server)
                    vals = (d / k) * diff[idx]
                    W[:, idx] = W[:, idx] + vals
                elif s.comp == IND_RANDK:
                    for i in range(n):
                        idx = C.randk_indices(d, k, workers[i])
                        W[i, idx] = W[i, idx] + (d / k) * diff[idx]
                else:
                    perm = C.random_permutation(d, server)
                    q = d // n
                    for i in range(n):
                        idx = perm[q * i : q * (i + 1)]
                        W[i, idx] = W[i, idx] + float(n) * diff[idx]
                bits += s.sparse_bits
            prev_full = bool(full)
            if s.verify_sync and full and not all(np.array_equal(W[i], x_new) for i in range(n)):
                status, status_round = DESYNC, t + 1
                break
        x = x_new
        x_finite = bool(np.isfinite(x).all())
        t += 1

    out = {key: np.asarray(v, dtype=np.float64) for key, v in rows.items()}
    out["round"] = np.asarray(rows["round"], dtype=np.int64)
    out["full"] = np.asarray(rows["full"], dtype=np.int8)
    out.update(
        rows=len(rows["round"]),
        status=status,
        status_round=status_round,
        t=t,
        x=x,
        w=w,
        W=W,
    )
    return out
