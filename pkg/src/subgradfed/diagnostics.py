"""Runtime checks of the one-step descent inequalities and rate fitting.

The descent checks freeze a state, draw the round's randomness many times and
compare the sample mean of the next Lyapunov value with the right-hand side
of the corresponding inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import compressors as C
from .compressors import CompressorSpec
from .linalg import matvec_batch, seqsum, sqnorm
from .problem import Problem, sign
from .rng import SplitMix64
from .schedules import TheoryConstantsEF21P, TheoryConstantsMarinaP


@dataclass(frozen=True)
class DescentCheck:
    mean: float
    bound: float
    stderr: float
    n_samples: int

    @property
    def slack(self) -> float:
        return 3.0 * self.stderr

    @property
    def holds(self) -> bool:
        return self.mean <= self.bound + self.slack


def _worker_subgrads(problem: Problem, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Y = matvec_batch(problem.scales, problem.shift, W)
    return seqsum(np.abs(Y), axis=1), matvec_batch(problem.scales, problem.shift, sign(Y))


def _summarize(samples, bound) -> DescentCheck:
    samples = np.asarray(samples)
    n = samples.size
    std = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return DescentCheck(float(np.mean(samples)), float(bound), std / math.sqrt(n), n)


def descent_check_ef21p(problem: Problem, x, w, gamma: float, k: int, rng: SplitMix64,
                        n_samples: int = 10_000) -> DescentCheck:
    """EF21-P step with unscaled RandK (contractive, alpha = k/d) as the compressor.

    Bound: V - 2 gamma (f(w) - f*) + B* gamma^2 ||grad f(w)||^2.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d = problem.d
    consts = TheoryConstantsEF21P.from_alpha(k / d)
    W = np.broadcast_to(w, (problem.n, d))
    fi, G = _worker_subgrads(problem, W)
    gbar = seqsum(G, axis=0) / problem.n
    gap = float(seqsum(fi)) / problem.n - problem.f_star
    V = sqnorm(x - problem.x_star) + consts.lyapunov_weight * sqnorm(w - x)
    bound = V - 2.0 * gamma * gap + consts.B_star * gamma * gamma * sqnorm(gbar)

    x_new = x - gamma * gbar
    base = sqnorm(x_new - problem.x_star)
    diff = x_new - w
    samples = np.empty(n_samples)
    for s in range(n_samples):
        idx = C.randk_indices(d, k, rng)
        resid = diff.copy()
        resid[idx] = 0.0  # w+ - x+ = C(diff) - diff
        samples[s] = base + consts.lyapunov_weight * sqnorm(resid)
    return _summarize(samples, bound)


def descent_check_marinap(problem: Problem, x, W, gamma: float, spec: CompressorSpec, p: float,
                          rng: SplitMix64, n_samples: int = 10_000) -> DescentCheck:
    """MARINA-P step over joint Bernoulli and compressor draws.

    Bound: V - 2 gamma gap + gamma^2 [lambda* mean ||g_i||^2 + (1 + (1-p) omega / (p lambda*)) ||g||^2].
    """
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    n, d = problem.n, problem.d
    c = problem.constants
    consts = TheoryConstantsMarinaP.from_params(spec.omega, p, c.L_bar, c.L_tilde)
    lam = consts.lambda_star
    if lam == 0.0:
        raise ValueError("lambda* = 0 (p = 1 or omega = 0): the drift term vanishes; nothing to check")
    fi, G = _worker_subgrads(problem, W)
    gbar = seqsum(G, axis=0) / n
    gap = float(seqsum(fi)) / n - problem.f_star
    mean_sq = float(seqsum(seqsum(G * G, axis=1))) / n

    def lyap(xv, Wv):
        drift = float(seqsum(seqsum((Wv - xv) ** 2, axis=1))) / n
        return sqnorm(xv - problem.x_star) + consts.lyapunov_weight * drift

    V = lyap(x, W)
    bound = (V - 2.0 * gamma * gap
             + gamma * gamma * (lam * mean_sq + (1.0 + (1.0 - p) * spec.omega / (p * lam)) * sqnorm(gbar)))

    x_new = x - gamma * gbar
    diff = x_new - x
    base = sqnorm(x_new - problem.x_star)
    workers = [SplitMix64(rng.next_u64()) for _ in range(n)]
    full_value = base  # all w_i = x+ after a full sync
    samples = np.empty(n_samples)
    for s in range(n_samples):
        if rng.uniform() < p:
            samples[s] = full_value
            continue
        msgs = C.compress_batch(spec, diff, workers, shared_rng=rng)
        Wn = W.copy()
        for i, m in enumerate(msgs):
            Wn[i, m.indices] += m.values
        samples[s] = lyap(x_new, Wn)
    return _summarize(samples, bound)


def loglog_slope(t, y, decades: float = 2.0, n_points: int = 50) -> float:
    """Least-squares slope of log10(y) against log10(t) over the last ``decades`` decades.

    The fit uses rows nearest to ``n_points`` log-spaced abscissae so that the
    densely logged tail does not dominate.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = (t > 0) & np.isfinite(y) & (y > 0)
    t, y = t[ok], y[ok]
    if t.size < 2:
        raise ValueError("need at least two positive points to fit a slope")
    hi = t.max()
    lo = max(hi / 10.0**decades, t.min())
    targets = np.logspace(math.log10(lo), math.log10(hi), n_points)
    idx = np.unique(np.searchsorted(t, targets).clip(0, t.size - 1))
    idx = idx[t[idx] >= lo]
    if idx.size < 2:
        raise ValueError("not enough points in the fitting window")
    return float(np.polyfit(np.log10(t[idx]), np.log10(y[idx]), 1)[0])


def min_so_far(y) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(y, dtype=np.float64))


def sm_bound(problem: Problem, T: int) -> float:
    """L0 R0 / sqrt(T): the guarantee of the subgradient method with gamma = R0 / (L0 sqrt(T))."""
    c = problem.constants
    return c.L0 * c.R0 / math.sqrt(T)

