"""Scaled-and-shifted tridiag(-1, 2, -1) matrices with an analytic spectrum.

Every worker matrix produced by the data generator has the form
``scale * P + shift * I`` where ``P`` is the d x d second-difference matrix.
Only the three scalars are stored; matvec is O(d) and the eigenvalues are

    scale * 4 sin^2(k pi / (2 (d + 1))) + shift,   k = 1..d

For angles below pi/2 the eigenvalue is evaluated as ``4 sin^2(a/2)`` (no
cancellation near 0), otherwise as ``2 - 2 cos a`` (no cancellation there).

Reductions in this module and in the optimizer loops are strictly sequential
(left to right) so that the numpy code and the compiled kernel agree bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DENSE_LIMIT = 64


def seqsum(a, axis: int = -1):
    """Left-to-right sum along ``axis`` (numpy's ``sum`` is pairwise)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[axis] == 0:
        return np.sum(a, axis=axis)
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


def seqdot(x, y) -> float:
    return float(seqsum(np.asarray(x) * np.asarray(y)))


def sqnorm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(seqsum(x * x))


@dataclass(frozen=True)
class SymTridiagMatrix:
    dim: int
    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "shift", float(self.shift))


def pattern_apply(x: np.ndarray) -> np.ndarray:
    """``P @ x`` along the last axis, evaluated as ``(2 x_j - x_{j-1}) - x_{j+1}``."""
    t = 2.0 * x
    t[..., 1:] -= x[..., :-1]
    t[..., :-1] -= x[..., 1:]
    return t


def matvec_batch(scales, shift: float, X: np.ndarray) -> np.ndarray:
    """Rows of ``X`` multiplied by ``scales[i] * P + shift * I``."""
    X = np.asarray(X, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64).reshape(-1, 1)
    return scales * pattern_apply(X) + shift * X


def matvec(m: SymTridiagMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.dim:
        raise ValueError(f"dimension mismatch: matrix is {m.dim}x{m.dim}, vector has shape {x.shape}")
    return m.scale * pattern_apply(x) + m.shift * x


def _pattern_eig(k: int, d: int) -> float:
    if 2 * k == d + 1:
        return 2.0  # cos(pi/2) = 0, which the float pi does not reproduce
    a = k * math.pi / (d + 1)
    if a < 0.5 * math.pi:
        return 4.0 * math.sin(0.5 * a) ** 2
    return 2.0 - 2.0 * math.cos(a)


def pattern_eigenvalues(d: int) -> np.ndarray:
    """All eigenvalues of P in increasing order."""
    return np.array([_pattern_eig(k, d) for k in range(1, d + 1)])


def eig_extremes(m: SymTridiagMatrix) -> tuple[float, float, float]:
    """Return ``(lambda_min, lambda_max, spectral_norm)``."""
    d = m.dim
    lo = _pattern_eig(1, d)
    hi = _pattern_eig(d, d)
    a = m.scale * lo + m.shift
    b = m.scale * hi + m.shift
    lam_min, lam_max = (a, b) if a <= b else (b, a)
    return lam_min, lam_max, max(abs(lam_min), abs(lam_max))


def average(matrices) -> SymTridiagMatrix:
    """Mean of matrices sharing the pattern; exact because the family is closed under averaging."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("need at least one matrix")
    d = matrices[0].dim
    if any(m.dim != d for m in matrices):
        raise ValueError("matrices must share a dimension")
    n = len(matrices)
    scale = float(seqsum([m.scale for m in matrices])) / n
    shift = float(seqsum([m.shift for m in matrices])) / n
    return SymTridiagMatrix(d, scale, shift)


def to_dense(m: SymTridiagMatrix) -> np.ndarray:
    """Materialize the matrix; test oracles only."""
    if m.dim > DENSE_LIMIT:
        raise ValueError(f"refusing to materialize a {m.dim}x{m.dim} matrix (limit {DENSE_LIMIT})")
    P = 2.0 * np.eye(m.dim) - np.eye(m.dim, k=1) - np.eye(m.dim, k=-1)
    return m.scale * P + m.shift * np.eye(m.dim)
