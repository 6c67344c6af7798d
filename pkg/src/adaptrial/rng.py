"""Reproducible, splittable random streams for parallel simulation.

Each replicate gets its own counter-based Philox stream keyed by a
splitmix64 hash of (master seed, replicate id). Streams are independent of
evaluation order and thread count, so simulation aggregates are bit-exact
reproducible no matter how replicates are scheduled. The test suite pins a
reference sequence to guard the mapping across versions.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer: a 64-bit bijective mixing function."""
    x &= _MASK
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK
    return (x ^ (x >> 31)) & _MASK


def stream_key(master_seed: int, replicate: int) -> int:
    """64-bit key for the given replicate's stream."""
    return mix64((master_seed & _MASK) ^ mix64((replicate + 1) * _GAMMA))


def rng_stream(master_seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for one replicate."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, replicate)))


def substream(master_seed: int, replicate: int, label: str) -> np.random.Generator:
    """Named substream, e.g. separate outcome vs allocation draws."""
    h = 1469598103934665603  # FNV-1a offset basis
    for b in label.encode("utf-8"):
        h = ((h ^ b) * 1099511628211) & _MASK
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, replicate) ^ mix64(h)))
