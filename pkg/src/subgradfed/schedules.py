"""Stepsizes for SM, EF21-P and MARINA-P.

The theory constants come from the convergence analysis: for EF21-P with a
contractive compressor of parameter alpha,

    theta = 1 - sqrt(1 - alpha),  lambda* = sqrt(1 - alpha) / theta,  B* = 1 + 2 lambda*,

and for MARINA-P with unbiased compressors (omega) and full-sync probability p,

    r = sqrt((1 - p) omega / p),  lambda* = (L_bar / L_tilde) r,  B~* = L_bar^2 + 2 L_bar L_tilde r.

Every stepsize is multiplied by a tuning factor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .linalg import seqsum


class ScheduleError(ValueError):
    pass


class DegenerateOracleError(ArithmeticError):
    """Zero (averaged) subgradient away from the optimum under a Polyak schedule."""


class ScheduleKind(str, enum.Enum):
    CONSTANT_OPTIMAL = "ConstantOptimal"
    DECREASING = "Decreasing"
    POLYAK_EF21P = "PolyakEF21P"
    POLYAK_MARINAP = "PolyakMarinaP"
    SM_BASELINE = "SMBaseline"
    FIXED_CONSTANT = "FixedConstant"


FACTOR_GRID = tuple(2.0**e for e in range(-9, 8))


@dataclass(frozen=True)
class TheoryConstantsEF21P:
    alpha: float
    theta: float
    lambda_star: float
    B_star: float
    lyapunov_weight: float

    @classmethod
    def from_alpha(cls, alpha: float) -> "TheoryConstantsEF21P":
        if not 0.0 < alpha <= 1.0:
            raise ScheduleError(f"alpha={alpha} outside (0, 1]")
        root = math.sqrt(1.0 - alpha)
        theta = 1.0 - root
        lam = root / theta
        weight = 0.0 if alpha == 1.0 else 1.0 / (lam * theta)
        return cls(alpha, theta, lam, 1.0 + 2.0 * root / theta, weight)


@dataclass(frozen=True)
class TheoryConstantsMarinaP:
    omega: float
    p: float
    L_bar: float
    L_tilde: float
    ratio: float  # sqrt((1 - p) omega / p)
    lambda_star: float
    B_tilde_star: float
    lyapunov_weight: float

    @classmethod
    def from_params(cls, omega: float, p: float, L_bar: float, L_tilde: float) -> "TheoryConstantsMarinaP":
        if omega < 0:
            raise ScheduleError(f"omega={omega} must be nonnegative")
        if not 0.0 < p <= 1.0:
            raise ScheduleError(f"p={p} outside (0, 1]")
        if not (L_bar > 0 and L_tilde > 0):
            raise ScheduleError("Lipschitz constants must be positive")
        ratio = math.sqrt((1.0 - p) * omega / p)
        lam = (L_bar / L_tilde) * ratio
        B = L_bar * L_bar + 2.0 * L_bar * L_tilde * ratio
        weight = 0.0 if lam == 0.0 else 1.0 / (lam * p)
        return cls(omega, p, L_bar, L_tilde, ratio, lam, B, weight)


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind
    factor: float = 1.0
    horizon_T: int | None = None
    f_star: float | None = None
    gamma0: float | None = None
    gamma: float | None = None  # FixedConstant only

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.factor > 0:
            raise ScheduleError(f"factor must be positive, got {self.factor}")
        if self.kind is ScheduleKind.FIXED_CONSTANT and (self.gamma is None or self.gamma < 0):
            raise ScheduleError("FixedConstant needs a nonnegative gamma")
        if self.horizon_T is not None and self.horizon_T < 1:
            raise ScheduleError("horizon_T must be >= 1")
        if self.f_star is not None and not math.isfinite(self.f_star):
            raise ScheduleError("f_star must be finite")

    def with_factor(self, factor: float) -> "Schedule":
        return Schedule(self.kind, factor, self.horizon_T, self.f_star, self.gamma0, self.gamma)

    @property
    def is_polyak(self) -> bool:
        return self.kind in (ScheduleKind.POLYAK_EF21P, ScheduleKind.POLYAK_MARINAP)


def _positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise ScheduleError(f"{name} must be positive, got {v}")


def gamma_constant_ef21p(c: TheoryConstantsEF21P, V0: float, L0: float, T: int, factor: float = 1.0) -> float:
    _positive(V0=V0, L0=L0, T=T)
    return factor * (1.0 / math.sqrt(T)) * math.sqrt(V0 / (c.B_star * L0 * L0))


def gamma_constant_marinap(c: TheoryConstantsMarinaP, V0: float, T: int, factor: float = 1.0) -> float:
    _positive(V0=V0, T=T, B_tilde_star=c.B_tilde_star)
    return factor * (1.0 / math.sqrt(T)) * math.sqrt(V0 / c.B_tilde_star)


def gamma_sm_baseline(R0: float, L0: float, T: int) -> float:
    _positive(R0=R0, L0=L0, T=T)
    return R0 / (L0 * math.sqrt(T))


def gamma0_optimal_ef21p(c: TheoryConstantsEF21P, V0: float, L0: float, T: int) -> float:
    _positive(V0=V0, L0=L0, T=T)
    return math.sqrt(V0 / (2.0 * c.B_star * L0 * L0 * math.log(T + 1)))


def gamma0_optimal_marinap(c: TheoryConstantsMarinaP, V0: float, T: int) -> float:
    _positive(V0=V0, T=T)
    return math.sqrt(V0 / (2.0 * c.B_tilde_star * math.log(T + 1)))


def gamma_decreasing(gamma0: float, t: int, factor: float = 1.0) -> float:
    if t < 0:
        raise ScheduleError("t must be >= 0")
    return factor * gamma0 / math.sqrt(t + 1)


def gamma_polyak_ef21p(c: TheoryConstantsEF21P, f_w: float, f_star: float, subgrad_norm_sq: float,
                       factor: float = 1.0) -> float:
    return polyak_ef21p_value(c.B_star, f_w - f_star, subgrad_norm_sq, factor)


def polyak_ef21p_value(B_star: float, gap: float, subgrad_norm_sq: float, factor: float) -> float:
    # a negative gap only arises from a misreported f*; stop moving rather than ascend
    if gap <= 0.0:
        return 0.0
    if subgrad_norm_sq == 0.0:
        raise DegenerateOracleError(f"zero subgradient with positive gap {gap}")
    return factor * gap / (B_star * subgrad_norm_sq)


def gamma_polyak_marinap(gap: float, mean_subgrad, per_worker_subgrads, omega: float, p: float,
                         factor: float = 1.0) -> float:
    mean_subgrad = np.asarray(mean_subgrad, dtype=np.float64)
    G = np.asarray(per_worker_subgrads, dtype=np.float64)
    n = G.shape[0]
    mean_sq = float(seqsum(seqsum(G * G, axis=1))) / n
    ratio = math.sqrt((1.0 - p) * omega / p)
    return polyak_marinap_value(ratio, gap, float(seqsum(mean_subgrad * mean_subgrad)), mean_sq, factor)


def polyak_marinap_value(ratio: float, gap: float, mean_norm_sq: float, mean_sq_norms: float,
                         factor: float) -> float:
    """gap / (||g||^2 + 2 ||g|| sqrt(mean ||g_i||^2) ratio), scaled by ``factor``."""
    if gap <= 0.0:
        return 0.0
    if mean_norm_sq == 0.0:
        raise DegenerateOracleError(f"zero averaged subgradient with positive gap {gap}")
    denom = mean_norm_sq + 2.0 * math.sqrt(mean_norm_sq) * math.sqrt(mean_sq_norms) * ratio
    return factor * gap / denom
