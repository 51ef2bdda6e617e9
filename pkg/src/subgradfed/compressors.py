"""Server-to-worker compression operators.

TopK is contractive with alpha = k/d. RandK (scaled by d/k) is unbiased with
omega = d/k - 1. PermK hands each worker a disjoint block of a random
permutation, scaled by n, so the worker outputs average back to the input
exactly; each single output is unbiased with omega = n - 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64


class CompressorKind(str, enum.Enum):
    TOPK = "TopK"
    SAME_RANDK = "SameRandK"
    IND_RANDK = "IndRandK"
    PERMK = "PermK"
    IDENTITY = "Identity"


# integer codes shared with the compiled kernel
KIND_CODES = {
    CompressorKind.IDENTITY: 0,
    CompressorKind.TOPK: 1,
    CompressorKind.SAME_RANDK: 2,
    CompressorKind.IND_RANDK: 3,
    CompressorKind.PERMK: 4,
}

UNBIASED_KINDS = frozenset(
    {CompressorKind.SAME_RANDK, CompressorKind.IND_RANDK, CompressorKind.PERMK, CompressorKind.IDENTITY}
)
CONTRACTIVE_KINDS = frozenset({CompressorKind.TOPK, CompressorKind.IDENTITY})


class CompressorError(ValueError):
    pass


@dataclass(frozen=True)
class CompressorSpec:
    kind: CompressorKind
    k: int
    dim: int
    n_workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", CompressorKind(self.kind))
        if self.dim < 1 or self.n_workers < 1:
            raise CompressorError("dim and n_workers must be positive")
        if self.kind is CompressorKind.IDENTITY:
            object.__setattr__(self, "k", self.dim)
        if not 1 <= self.k <= self.dim:
            raise CompressorError(f"k={self.k} outside [1, {self.dim}]")
        if self.kind is CompressorKind.PERMK:
            if self.dim % self.n_workers:
                raise CompressorError(f"PermK needs d % n == 0 (d={self.dim}, n={self.n_workers})")
            if self.k != self.dim // self.n_workers:
                raise CompressorError(f"PermK needs k == d / n = {self.dim // self.n_workers}, got {self.k}")

    @classmethod
    def identity(cls, dim, n_workers=1):
        return cls(CompressorKind.IDENTITY, dim, dim, n_workers)

    @property
    def alpha(self) -> float:
        """Contraction parameter; only meaningful for TopK and Identity."""
        if self.kind is CompressorKind.IDENTITY:
            return 1.0
        if self.kind is CompressorKind.TOPK:
            return self.k / self.dim
        raise CompressorError(f"{self.kind.value} is not used as a contractive compressor")

    @property
    def omega(self) -> float:
        if self.kind is CompressorKind.IDENTITY:
            return 0.0
        if self.kind in (CompressorKind.SAME_RANDK, CompressorKind.IND_RANDK):
            return self.dim / self.k - 1.0
        if self.kind is CompressorKind.PERMK:
            return float(self.n_workers - 1)
        raise CompressorError("TopK is biased; it has no omega")

    @property
    def randomized(self) -> bool:
        return self.kind in (CompressorKind.SAME_RANDK, CompressorKind.IND_RANDK, CompressorKind.PERMK)


@dataclass(frozen=True)
class CompressedVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def _check_k(k, d):
    if not 1 <= k <= d:
        raise CompressorError(f"k={k} outside [1, {d}]")


def topk_indices(x: np.ndarray, k: int) -> np.ndarray:
    """Sorted indices of the k largest |x_j|; ties go to the lowest index."""
    a = np.abs(x)
    d = a.size
    if k >= d:
        return np.arange(d)
    tau = np.partition(a, d - k)[d - k]
    above = np.flatnonzero(a > tau)
    at = np.flatnonzero(a == tau)[: k - above.size]
    return np.sort(np.concatenate([above, at]))


def compress_topk(x, k: int) -> CompressedVector:
    x = np.asarray(x, dtype=np.float64)
    _check_k(k, x.size)
    idx = topk_indices(x, k)
    return CompressedVector(idx, x[idx].copy(), x.size)


def randk_indices(d: int, k: int, rng: SplitMix64) -> np.ndarray:
    """Uniform size-k subset by a partial Fisher-Yates pass over 0..d-1."""
    perm = np.arange(d)
    offsets = rng.bounded_array(np.arange(d, d - k, -1))
    for i in range(k):
        j = i + offsets[i]
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:k])


def compress_randk(x, k: int, rng: SplitMix64) -> CompressedVector:
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    _check_k(k, d)
    idx = randk_indices(d, k, rng)
    return CompressedVector(idx, (d / k) * x[idx], d)


def compress_randk_contractive(x, k: int, rng: SplitMix64) -> CompressedVector:
    """RandK without the d/k scaling: contractive with alpha = k/d exactly in expectation."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(k, x.size)
    idx = randk_indices(x.size, k, rng)
    return CompressedVector(idx, x[idx].copy(), x.size)


def random_permutation(d: int, rng: SplitMix64) -> np.ndarray:
    """Fisher-Yates, swapping position i with a draw from [0, i] for i = d-1 .. 1."""
    perm = np.arange(d)
    if d > 1:
        draws = rng.bounded_array(np.arange(d, 1, -1))
        for step, i in enumerate(range(d - 1, 0, -1)):
            j = draws[step]
            perm[i], perm[j] = perm[j], perm[i]
    return perm


def permk_from_permutation(x: np.ndarray, n: int, perm: np.ndarray) -> list[CompressedVector]:
    d = x.size
    q = d // n
    out = []
    for i in range(n):
        idx = np.sort(perm[q * i : q * (i + 1)])
        out.append(CompressedVector(idx, float(n) * x[idx], d))
    return out


def compress_permk_batch(x, n: int, rng: SplitMix64) -> list[CompressedVector]:
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    if n < 1 or d % n:
        raise CompressorError(f"PermK needs d % n == 0 (d={d}, n={n})")
    return permk_from_permutation(x, n, random_permutation(d, rng))


def compress_batch(spec: CompressorSpec, x, rng_per_worker, shared_rng: SplitMix64 | None = None):
    """Compress ``x`` once per worker according to the deployment mode of ``spec``.

    SameRandK and PermK draw from ``shared_rng`` (defaults to the first worker
    generator); IndRandK draws worker i's subset from ``rng_per_worker[i]``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size != spec.dim:
        raise CompressorError(f"vector has {x.size} entries, compressor expects {spec.dim}")
    n = spec.n_workers
    shared = shared_rng if shared_rng is not None else (rng_per_worker[0] if rng_per_worker else None)
    kind = spec.kind
    if kind is CompressorKind.IDENTITY:
        full = CompressedVector(np.arange(spec.dim), x.copy(), spec.dim)
        return [full] * n
    if kind is CompressorKind.TOPK:
        return [compress_topk(x, spec.k)] * n
    if kind is CompressorKind.SAME_RANDK:
        return [compress_randk(x, spec.k, shared)] * n
    if kind is CompressorKind.IND_RANDK:
        if len(rng_per_worker) != n:
            raise CompressorError(f"need {n} worker generators, got {len(rng_per_worker)}")
        return [compress_randk(x, spec.k, rng) for rng in rng_per_worker]
    return compress_permk_batch(x, n, shared)


def expected_density(spec: CompressorSpec, p_full: float = 0.0) -> float:
    """Expected nonzeros per worker message; MARINA-P mixes in dense rounds with probability ``p_full``."""
    if spec.kind is CompressorKind.IDENTITY:
        return float(spec.dim)
    if not 0.0 <= p_full <= 1.0:
        raise CompressorError(f"p_full={p_full} outside [0, 1]")
    return spec.dim * p_full + (1.0 - p_full) * spec.k
