"""Deterministic 64-bit random streams.

All randomness in the simulator comes from SplitMix64. Its state transition is

    state <- state + 0x9E3779B97F4A7C15  (mod 2**64)
    output = mix64(state)

with ``mix64`` the SplitMix64 finalizer below. Because the i-th output only
depends on ``state0 + i * GOLDEN`` the stream is counter based, so blocks of
draws can be produced with vectorized uint64 arithmetic and still match the
compiled kernel draw for draw.

Derived quantities:

* uniform double: ``(u >> 11) * 2**-53`` in [0, 1)
* bounded integer in [0, m): ``min(floor(uniform * m), m - 1)``
* standard normal pairs: Box-Muller on ``(1 - u1, u2)``
* child seeds: ``derive_seed(seed, key) = mix64(seed ^ mix64(key + GOLDEN))``
"""

from __future__ import annotations

import math
import struct

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

_GOLDEN_U = np.uint64(GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & MASK64
    if isinstance(key, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(key)))[0]
    if isinstance(key, str):
        h = 0
        for byte in key.encode("utf-8"):
            h = mix64(h ^ byte)
        return h
    raise TypeError(f"cannot derive a seed from {type(key).__name__}")


def derive_seed(seed: int, *keys) -> int:
    """Fold ``keys`` (ints, floats or strings) into ``seed``; stable across platforms."""
    h = int(seed) & MASK64
    for key in keys:
        h = mix64(h ^ mix64((_key_to_int(key) + GOLDEN) & MASK64))
    return h


def server_seed(run_seed: int) -> int:
    return derive_seed(run_seed, 0)


def worker_seed(run_seed: int, worker: int) -> int:
    return derive_seed(run_seed, worker + 1)


class SplitMix64:
    """Seeded generator; never share one instance between threads."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def __repr__(self):
        return f"SplitMix64(state=0x{self.state:016x})"

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def u64_array(self, m: int) -> np.ndarray:
        if m <= 0:
            return np.zeros(0, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + _GOLDEN_U * np.arange(1, m + 1, dtype=np.uint64)
            z = (z ^ (z >> np.uint64(30))) * _M1_U
            z = (z ^ (z >> np.uint64(27))) * _M2_U
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + GOLDEN * m) & MASK64
        return z

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def uniforms(self, m: int) -> np.ndarray:
        return (self.u64_array(m) >> np.uint64(11)).astype(np.float64) * _INV53

    def bounded(self, m: int) -> int:
        j = int(self.uniform() * m)
        return m - 1 if j >= m else j

    def bounded_array(self, bounds: np.ndarray) -> np.ndarray:
        """One bounded draw per entry of ``bounds``, consumed in order."""
        bounds = np.asarray(bounds, dtype=np.int64)
        j = (self.uniforms(bounds.size) * bounds.astype(np.float64)).astype(np.int64)
        return np.minimum(j, bounds - 1)

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def normals(self, m: int) -> np.ndarray:
        """``m`` standard normals via Box-Muller (pairs, last sine dropped if m is odd)."""
        out = np.empty(m, dtype=np.float64)
        u = self.uniforms(2 * ((m + 1) // 2))
        for pair in range((m + 1) // 2):
            r = math.sqrt(-2.0 * math.log(1.0 - u[2 * pair]))
            angle = 2.0 * math.pi * u[2 * pair + 1]
            out[2 * pair] = r * math.cos(angle)
            if 2 * pair + 1 < m:
                out[2 * pair + 1] = r * math.sin(angle)
        return out
