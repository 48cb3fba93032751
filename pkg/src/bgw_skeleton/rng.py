"""Counter-based random streams.

Every simulated replica owns a 64-bit stream key derived from
``(master_seed, replica)``.  The ``j``-th uniform of a stream is a SplitMix64
hash of ``key + (j + 1) * GOLDEN``, so any draw can be computed from its
counter alone.  Both kernel backends assign counters by node index
(breadth-first order) or event index, which is what makes the compiled and
the numpy implementations agree bit for bit and makes results independent
of how replicas are scheduled across workers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SEED_SALT = 0x5851F42D4C957F2D

# Counter offset of the jitter stream used by the Monte Carlo harness; far
# above anything a tree or birth-death kernel consumes.
JITTER_COUNTER = 1 << 62

_U53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, replica: int = 0) -> int:
    """Key of the stream for ``replica`` under ``seed``."""
    if seed < 0 or replica < 0:
        raise ValueError("seed and replica must be non-negative")
    base = mix64(seed ^ SEED_SALT)
    return mix64(base + GOLDEN * (replica + 1))


def uniform(key: int, counter: int) -> float:
    return (mix64(key + GOLDEN * (counter + 1)) >> 11) * _U53


_G = np.uint64(GOLDEN)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, counters) -> np.ndarray:
    """Vectorised :func:`uniform` over an array of counters."""
    ctr = np.asarray(counters, dtype=np.uint64)
    z = np.uint64(key) + _G * (ctr + np.uint64(1))
    return (mix64_array(z) >> np.uint64(11)).astype(np.float64) * _U53
