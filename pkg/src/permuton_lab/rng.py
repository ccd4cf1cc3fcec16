"""Seed handling.

Every sampler takes an integer seed and draws from a numpy ``Generator``
backed by PCG64.  Replica ``i`` of a campaign seeded with ``master`` uses
``stream_seed(master, i)``, a splitmix64 finalizer applied to
``master + (i + 1) * 0x9E3779B97F4A7C15`` (mod 2**64).  The mixing keeps
nearby master seeds and nearby replica indices statistically unrelated.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_seed(master: int, index: int) -> int:
    """Seed of replica ``index`` under master seed ``master``."""
    return splitmix64((master & _MASK) + (index + 1) * _GOLDEN)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed, stream)))


def as_rng(rng_or_seed) -> np.random.Generator:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return make_rng(int(rng_or_seed))
