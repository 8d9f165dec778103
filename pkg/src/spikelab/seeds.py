"""Deterministic RNG stream derivation.

Every randomized operation in the package derives its generator from a
small tuple of keys (master seed, split name, sample index, operator tag,
...) so that results never depend on iteration order, chunking, or worker
count.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"seed key must be int or str, got {type(key).__name__}")


def derive_rng(*keys) -> np.random.Generator:
    """Generator for the stream identified by `keys` (order-sensitive)."""
    entropy = [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
