"""
Seedable, splittable pseudo-random numbers that are identical on every
platform.

The generator is xoshiro256** (Blackman & Vigna) seeded from four
consecutive SplitMix64 outputs of a 64-bit seed. Every instance carries a
vector of independent lanes held in numpy uint64 arrays, so one call
draws one value per lane. Dataset blocks and phantoms use one lane per
record or pixel; a scalar stream is simply a single lane.

Doubles are built from the top 53 bits: ``(x >> 11) * 2**-53``. Normal
variates use Box-Muller with two uniforms per value and the cosine
branch only, so the first k normals of a lane never depend on how many
are drawn afterwards.
"""
from __future__ import annotations

import logging

import numpy as np

_logger = logging.getLogger(__name__)

__all__ = ["splitMix64", "SplitMix64", "Xoshiro256StarStar", "deriveSeeds", "MASK64"]

MASK64 = (1 << 64) - 1

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_INDEX_MIX = 0xD1B54A32D192ED03
_DOUBLE_UNIT = 2.0 ** -53


def _u64(values) -> np.ndarray:
    """Coerce Python ints (any sign or size) or arrays to a uint64 array."""
    if isinstance(values, np.ndarray) and values.dtype == np.uint64:
        return values.copy()
    if isinstance(values, np.ndarray):
        return values.astype(np.uint64)
    if isinstance(values, (int, np.integer)):
        return np.array([int(values) & MASK64], dtype=np.uint64)
    return np.array([int(value) & MASK64 for value in values], dtype=np.uint64)


def _shr(x: np.ndarray, k: int) -> np.ndarray:
    return x >> np.uint64(k)


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


def splitMix64(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    One SplitMix64 step on every lane.

    :param state: Current states, should be a uint64 ndarray
    :return: new_state, output - tuple[ndarray, ndarray]
    """
    with np.errstate(over='ignore'):
        state = state + _GOLDEN_GAMMA
        z = state.copy()
        z = (z ^ _shr(z, 30)) * _MIX_1
        z = (z ^ _shr(z, 27)) * _MIX_2
    return state, z ^ _shr(z, 31)


class SplitMix64:
    """SplitMix64 stream, mainly used to expand seeds."""

    def __init__(self, seeds):
        self.state = _u64(seeds)

    def nextUint64(self) -> np.ndarray:
        self.state, output = splitMix64(self.state)
        return output


class Xoshiro256StarStar:

    def __init__(self, seeds):
        """
        :param seeds: One 64-bit seed per lane, should be an int | list[int] | uint64 ndarray
        """
        mixer = SplitMix64(seeds)
        self.state = np.stack([mixer.nextUint64() for _ in range(4)])  # (4, lanes)

    @property
    def lanes(self) -> int:
        return self.state.shape[1]

    def nextUint64(self) -> np.ndarray:
        s0, s1, s2, s3 = self.state
        with np.errstate(over='ignore'):
            result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self.state = np.stack([s0, s1, s2, s3])
        return result

    def random(self, count: int | None = None) -> np.ndarray:
        """
        Uniform doubles in [0, 1).

        :param count: Draws per lane, None for a single draw, should be an int
        :return: values - ndarray (lanes,) or (lanes, count)
        """
        if count is None:
            return _shr(self.nextUint64(), 11).astype(np.float64) * _DOUBLE_UNIT
        out = np.empty((self.lanes, count), dtype=np.float64)
        for j in range(count):
            out[:, j] = _shr(self.nextUint64(), 11).astype(np.float64) * _DOUBLE_UNIT
        return out

    def uniform(self, low: float, high: float, count: int | None = None) -> np.ndarray:
        return low + (high - low) * self.random(count)

    def integers(self, low: int, high: int) -> np.ndarray:
        """One integer per lane, uniform over the inclusive range [low, high]."""
        span = high - low + 1
        return low + np.minimum(np.floor(self.random() * span).astype(np.int64), span - 1)

    def normal(self, count: int) -> np.ndarray:
        """Standard normal variates, (lanes, count)."""
        uniforms = self.random(2 * count)
        u1, u2 = uniforms[:, 0::2], uniforms[:, 1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def deriveSeeds(seed: int, indices, count: int = 3) -> np.ndarray:
    """
    Independent child seeds for records, pixels or voxels.

    The child seeds of index i are the first `count` SplitMix64 outputs of
    the state seed XOR (i * 0xD1B54A32D192ED03).

    :param seed: Parent seed, should be an int
    :param indices: Record indices, should be an int | Iterable[int] | ndarray
    :param count: Seeds per index, should be an int
    :return: seeds - uint64 ndarray (len(indices), count)
    """
    indices = _u64(np.atleast_1d(np.asarray(indices, dtype=np.uint64)))
    with np.errstate(over='ignore'):
        state = _u64(seed)[0] ^ (indices * np.uint64(_INDEX_MIX))
    out = np.empty((indices.size, count), dtype=np.uint64)
    for j in range(count):
        state, out[:, j] = splitMix64(state)
    return out
