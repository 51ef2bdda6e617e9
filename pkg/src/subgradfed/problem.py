"""Synthetic finite-sum problem f(x) = (1/n) sum_i ||A_i x||_1.

Worker matrices are (nu_i / 4) * tridiag(-1, 2, -1) with nu_i = 1 + s * xi_i,
then all of them are shifted by (mu - lambda_min(mean A_i)) * I. The
minimizer is the origin with optimal value 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import SymTridiagMatrix, seqsum
from .rng import SplitMix64


@dataclass(frozen=True)
class GenConfig:
    n: int
    d: int
    mu: float = 1e-6
    noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.noise_scale < 0:
            raise ValueError(f"noise_scale must be nonnegative, got {self.noise_scale}")


@dataclass(frozen=True)
class ProblemConstants:
    L0: float
    L_bar: float
    L_tilde: float
    sigma_A: float
    R0_sq: float

    @property
    def R0(self) -> float:
        return math.sqrt(self.R0_sq)


@dataclass(frozen=True, eq=False)
class Problem:
    matrices: tuple
    x_star: np.ndarray
    f_star: float
    x0: np.ndarray
    lipschitz_i: tuple
    constants: ProblemConstants
    config: GenConfig | None = field(default=None)

    @property
    def n(self) -> int:
        return len(self.matrices)

    @property
    def d(self) -> int:
        return self.matrices[0].dim

    @property
    def scales(self) -> np.ndarray:
        return np.array([m.scale for m in self.matrices])

    @property
    def shift(self) -> float:
        return self.matrices[0].shift


def sigma_A_from_norms(norms) -> float:
    """sqrt(mean ||A_i||^2 - (mean ||A_j||)^2), evaluated in centred form.

    The centred form mean((||A_i|| - mean)^2) is the same quantity without the
    cancellation of the raw moments. Identical norms give exactly 0 (the mean
    of equal floats need not reproduce them, so that case is caught first).
    """
    norms = np.asarray(norms, dtype=np.float64)
    n = norms.size
    if np.all(norms == norms[0]):
        return 0.0
    mean = float(seqsum(norms)) / n
    dev = norms - mean
    return math.sqrt(float(seqsum(dev * dev)) / n)


def sigma_A(p: Problem) -> float:
    return sigma_A_from_norms([linalg.eig_extremes(m)[2] for m in p.matrices])


def build_problem(matrices, x0, f_star=0.0, x_star=None, config=None) -> Problem:
    """Assemble a Problem and its constants; L_{0,i} is taken as ||A_i||_2."""
    matrices = tuple(matrices)
    d = matrices[0].dim
    if any(m.dim != d for m in matrices):
        raise ValueError("all worker matrices must share a dimension")
    x0 = np.asarray(x0, dtype=np.float64).copy()
    if x0.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},)")
    x_star = np.zeros(d) if x_star is None else np.asarray(x_star, dtype=np.float64).copy()
    n = len(matrices)
    lips = np.array([linalg.eig_extremes(m)[2] for m in matrices])
    L_bar = float(seqsum(lips)) / n
    L_tilde = math.sqrt(float(seqsum(lips * lips)) / n)
    consts = ProblemConstants(
        L0=L_bar,
        L_bar=L_bar,
        L_tilde=L_tilde,
        sigma_A=sigma_A_from_norms(lips),
        R0_sq=linalg.sqnorm(x0 - x_star),
    )
    x0.setflags(write=False)
    x_star.setflags(write=False)
    return Problem(matrices, x_star, float(f_star), x0, tuple(float(v) for v in lips), consts, config)


def generate(cfg: GenConfig) -> Problem:
    rng = SplitMix64(cfg.seed)
    nu = 1.0 + cfg.noise_scale * rng.normals(cfg.n)
    scales = nu / 4.0
    avg = linalg.average([SymTridiagMatrix(cfg.d, s, 0.0) for s in scales])
    lam_min = linalg.eig_extremes(avg)[0]
    shift = cfg.mu - lam_min
    matrices = [SymTridiagMatrix(cfg.d, s, shift) for s in scales]
    x0 = rng.normals(cfg.d)
    return build_problem(matrices, x0, config=cfg)


def _check_x(p: Problem, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.d,):
        raise ValueError(f"dimension mismatch: expected ({p.d},), got {x.shape}")
    return x


def f_i_value(p: Problem, i: int, x) -> float:
    x = _check_x(p, x)
    return float(seqsum(np.abs(linalg.matvec(p.matrices[i], x))))


def f_values(p: Problem, x) -> np.ndarray:
    """All f_i(x) at once."""
    x = _check_x(p, x)
    Y = linalg.matvec_batch(p.scales, p.shift, np.broadcast_to(x, (p.n, p.d)))
    return seqsum(np.abs(Y), axis=1)


def f_value(p: Problem, x) -> float:
    return float(seqsum(f_values(p, x))) / p.n


def sign(v: np.ndarray) -> np.ndarray:
    """Componentwise sign with sign(0) = +1."""
    return np.where(v >= 0, 1.0, -1.0)


def subgradient_i(p: Problem, i: int, x) -> np.ndarray:
    """A_i^T sign(A_i x); A_i is symmetric."""
    x = _check_x(p, x)
    m = p.matrices[i]
    return linalg.matvec(m, sign(linalg.matvec(m, x)))


def subgradient(p: Problem, x) -> np.ndarray:
    """Averaged subgradient (1/n) sum_i A_i^T sign(A_i x)."""
    x = _check_x(p, x)
    Y = linalg.matvec_batch(p.scales, p.shift, np.broadcast_to(x, (p.n, p.d)))
    G = linalg.matvec_batch(p.scales, p.shift, sign(Y))
    return seqsum(G, axis=0) / p.n


# -- serialization ---------------------------------------------------------

def to_json_dict(p: Problem) -> dict:
    if len({m.shift for m in p.matrices}) != 1:
        raise ValueError("serialization needs a common shift")
    cfg = p.config
    return {
        "n": p.n,
        "d": p.d,
        "mu": None if cfg is None else cfg.mu,
        "noise_scale": None if cfg is None else cfg.noise_scale,
        "seed": None if cfg is None else cfg.seed,
        "scales": [m.scale for m in p.matrices],
        "shift": p.shift,
        "x0": p.x0.tolist(),
    }


def from_json_dict(data: dict) -> Problem:
    required = {"n", "d", "scales", "shift", "x0"}
    missing = required - data.keys()
    if missing:
        raise ValueError(f"problem file is missing keys: {sorted(missing)}")
    unknown = data.keys() - required - {"mu", "noise_scale", "seed"}
    if unknown:
        raise ValueError(f"problem file has unknown keys: {sorted(unknown)}")
    n, d = int(data["n"]), int(data["d"])
    if len(data["scales"]) != n or len(data["x0"]) != d:
        raise ValueError("problem file: scales/x0 lengths disagree with n/d")
    cfg = None
    if data.get("seed") is not None:
        cfg = GenConfig(n=n, d=d, mu=data["mu"], noise_scale=data["noise_scale"], seed=data["seed"])
    matrices = [SymTridiagMatrix(d, float(s), float(data["shift"])) for s in data["scales"]]
    return build_problem(matrices, np.array(data["x0"], dtype=np.float64), config=cfg)


def save(p: Problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(p), fh, indent=1)
        fh.write("\n")


def load(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return from_json_dict(json.load(fh))
