"""Counter-based random numbers keyed by integer tuples.

Every random quantity in the package is a pure function of a 64-bit key
built by hashing (seed, stream kind, site/edge, epoch, draw counter) with the
SplitMix64 finalizer. There is no sequential generator state, so a stream can
be evaluated lazily, in any order, and in parallel with bit-identical output.
"""
from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
EPOCH_MULT = 0xD6E8FEB86659FD93
THIN_SALT = 0x5851F42D4C957F2D
LAMBDA_THIN_SALT = 0x14057B7EF767814F

_GOLDEN = np.uint64(GOLDEN)
_EPOCH_MULT = np.uint64(EPOCH_MULT)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def mix64(x):
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = np.uint64(x)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, inline="always")
def unit_open(x):
    """Map a 64-bit word to a double strictly inside (0, 1)."""
    return (np.float64(np.uint64(x) >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True, inline="always")
def epoch_key(stream_key, epoch):
    return mix64(np.uint64(stream_key) + np.uint64(epoch) * _EPOCH_MULT)


@njit(cache=True, nogil=True, inline="always")
def draw_key(ekey, j):
    return mix64(np.uint64(ekey) + np.uint64(j + 1) * _GOLDEN)


@njit(cache=True, nogil=True, inline="always")
def combine(a, b):
    return mix64(np.uint64(a) ^ mix64(np.uint64(b) + _GOLDEN))


def mix64_py(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash_ints(*values: int) -> int:
    """Order-sensitive 64-bit hash of a tuple of (possibly negative) ints."""
    h = 0x243F6A8885A308D3
    for v in values:
        h = mix64_py(h ^ mix64_py((v + GOLDEN) & MASK64))
    return h


def combine_py(a: int, b: int) -> int:
    return mix64_py((a & MASK64) ^ mix64_py(((b & MASK64) + GOLDEN) & MASK64))


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for replicate ``path`` of a run seeded with ``seed``."""
    h = seed & MASK64
    for p in path:
        h = combine_py(h, p)
    return h


def replicate_seeds(seed: int, n: int, *prefix: int) -> np.ndarray:
    """``derive_seed(seed, *prefix, r)`` for r in range(n), vectorized."""
    return _replicate_seeds(np.uint64(derive_seed(seed, *prefix)), n)


@njit(cache=True, nogil=True)
def _replicate_seeds(base, n):
    out = np.empty(n, dtype=np.uint64)
    for r in range(n):
        out[r] = combine(base, r)
    return out


def uniforms(keys: np.ndarray) -> np.ndarray:
    return _uniforms(np.asarray(keys, dtype=np.uint64))


@njit(cache=True, nogil=True)
def _uniforms(keys):
    out = np.empty(keys.shape[0], dtype=np.float64)
    for i in range(keys.shape[0]):
        out[i] = unit_open(mix64(keys[i]))
    return out
