"""Counter-based random streams.

Every draw is a pure function of ``(root seed, particle, window, counter)``,
hashed with the splitmix64 finalizer. Streams can therefore be evaluated in
any order, on any thread, and still give the same numbers.
"""
from __future__ import annotations

import numba as nb
import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

GOLDEN = np.uint64(_GOLDEN)
M1 = np.uint64(_M1)
M2 = np.uint64(_M2)


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * M1
    z = (z ^ (z >> np.uint64(27))) * M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def stream_key(seed, particle, window):
    """64-bit key of the stream owned by ``particle`` in ``window``."""
    k = mix64(np.uint64(seed) + GOLDEN)
    k = mix64(k ^ (np.uint64(particle) * GOLDEN + np.uint64(0x632BE59BD9B4E019)))
    k = mix64(k ^ (np.uint64(window) * M1 + np.uint64(0x8CB92BA72F3D8DD7)))
    return k


@nb.njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform draw in the half-open interval (0, 1]."""
    z = mix64(key + (np.uint64(counter) + np.uint64(1)) * GOLDEN)
    return (float(z >> np.uint64(11)) + 1.0) * _INV53


@nb.njit(cache=True, inline="always")
def exponential(key, counter, rate):
    return -np.log(uniform(key, counter)) / rate


def seed_to_uint64(seed: int) -> int:
    """Fold an arbitrary Python int into the 64-bit seed space."""
    return int(seed) & _MASK


# Pure-Python reference of the same functions, used to pin the stream values.

def _mix64_py(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def stream_key_py(seed: int, particle: int, window: int) -> int:
    k = _mix64_py(seed + _GOLDEN)
    k = _mix64_py(k ^ ((particle * _GOLDEN + 0x632BE59BD9B4E019) & _MASK))
    k = _mix64_py(k ^ ((window * _M1 + 0x8CB92BA72F3D8DD7) & _MASK))
    return k


def uniform_py(key: int, counter: int) -> float:
    z = _mix64_py(key + (counter + 1) * _GOLDEN)
    return ((z >> 11) + 1.0) * _INV53


@nb.njit(cache=True)
def uniforms(seed, particle, window, n):
    key = stream_key(np.uint64(seed), np.uint64(particle), np.uint64(window))
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(key, i)
    return out
