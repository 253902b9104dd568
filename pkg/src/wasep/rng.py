"""Reproducible random streams.

Every random draw in the package is tied to a ``(seed, replica, tag)``
triple. The triple is hashed with BLAKE2b into a 64-bit stream key, so
results never depend on how replicas are scheduled across threads.

Two consumers use the key:

* Python-level code gets a :class:`numpy.random.Generator` backed by the
  counter-based Philox bit generator (:func:`generator`).
* JIT kernels use SplitMix64 in counter mode: the n-th output of stream
  ``key`` is ``mix64(key + n * 0x9E3779B97F4A7C15)``. The kernel state is
  a single ``uint64`` (the running counter), stored in a length-1 array.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


def stream_key(seed: int, replica: int = 0, tag: str = "") -> int:
    """64-bit key for stream ``(seed, replica, tag)``."""
    msg = f"{int(seed) & MASK64}:{int(replica)}:{tag}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def stream_keys(seed: int, replicas: int, tag: str) -> np.ndarray:
    return np.array([stream_key(seed, r, tag) for r in range(replicas)], dtype=np.uint64)


def generator(seed: int, replica: int = 0, tag: str = "") -> np.random.Generator:
    """Philox-backed generator for stream ``(seed, replica, tag)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, replica, tag)))


@nb.njit(inline="always")
def next_u64(state):
    state[0] += _GAMMA
    z = state[0]
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always")
def uniform(state):
    """Uniform double on [0, 1) with 53 random bits."""
    return (next_u64(state) >> _S11) * _INV53


@nb.njit(inline="always")
def exponential(state, rate):
    return -np.log(1.0 - uniform(state)) / rate


def kernel_state(key: int) -> np.ndarray:
    return np.array([key], dtype=np.uint64)
