"""Counter-based random streams.

Every random draw is ``mix64(key + (counter + 1) * GAMMA)``, i.e. output
number ``counter`` of a SplitMix64 generator seeded with ``key``.  Because a
draw depends only on ``(key, counter)`` there is no sequential state: a
trajectory can be split, restarted or run on any worker and the numbers come
out the same.

Key derivation:

* trajectory ``t`` of a batch with seed ``s``: ``trajectory_key(s, t)``
* the coupled walk's private substream: ``substream_key(k, 1)``
* step ``i`` of a walk with key ``k`` consumes counters ``3i``, ``3i+1`` and
  ``3i+2`` (jump atom, tail magnitude, tail axis/sign).
"""
from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "splitmix64-counter/v1"

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_SALT_TRAJECTORY = 0x5851F42D4C957F2D
_SALT_SUBSTREAM = 0xD1342543DE82EF95

COUNTERS_PER_STEP = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def draw(key: int, counter: int) -> int:
    return mix64(key + (counter + 1) * GAMMA)


def trajectory_key(seed: int, index: int) -> int:
    return draw(mix64(seed ^ _SALT_TRAJECTORY), index)


def substream_key(key: int, stream: int) -> int:
    return mix64(key ^ mix64(_SALT_SUBSTREAM + stream))


def derive_seed(seed: int, *path: int) -> int:
    """Derive an independent 64-bit seed, e.g. one per grid point."""
    out = seed & MASK64
    for p in path:
        out = draw(mix64(out ^ _SALT_SUBSTREAM), p)
    return out


def trajectory_keys(seed: int, start: int, stop: int) -> np.ndarray:
    base = mix64(seed ^ _SALT_TRAJECTORY)
    idx = np.arange(start, stop, dtype=np.uint64)
    return mix64_array(np.uint64(base) + (idx + np.uint64(1)) * np.uint64(GAMMA))


def substream_keys(keys: np.ndarray, stream: int) -> np.ndarray:
    return mix64_array(keys ^ np.uint64(mix64(_SALT_SUBSTREAM + stream)))


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def draw_array(keys: np.ndarray, counter: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        offset = np.uint64(((counter + 1) * GAMMA) & MASK64)
        return mix64_array(keys + offset)


def uniform53(u: int) -> float:
    """Map a 64-bit draw to the open interval (0, 1)."""
    return ((u >> 11) + 0.5) * (1.0 / 9007199254740992.0)
