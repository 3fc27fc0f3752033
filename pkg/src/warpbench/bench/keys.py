"""Deterministic workload key generation.

A seeded PCG64 stream replaces OS randomness so every benchmark's key
stream is reproducible from its seed alone. Sentinel patterns are
rejected; the three reserved values are so sparse that a rejection pass
is effectively free.
"""

from __future__ import annotations

import numpy as np

from ..core import MASK64

_SENTINEL_MAX = 2**64 - 2  # RESERVED_KEY; everything >= this is reserved


def mix64_np(x: np.ndarray) -> np.ndarray:
    """Vectorized counterpart of core.mix64 (bit-identical)."""
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
    return x


def gen_uniform_keys(seed: int, count: int) -> np.ndarray:
    """`count` uniform 64-bit non-sentinel keys, deterministic per seed."""
    rng = np.random.default_rng(seed & MASK64)
    out = np.empty(count, dtype=np.uint64)
    filled = 0
    while filled < count:
        chunk = rng.integers(0, 2**64, size=count - filled, dtype=np.uint64)
        chunk = chunk[(chunk != 0) & (chunk < _SENTINEL_MAX)]
        out[filled:filled + len(chunk)] = chunk
        filled += len(chunk)
    return out


def gen_uniform_key_list(seed: int, count: int) -> list:
    """Same stream as gen_uniform_keys, as plain ints for table calls."""
    return gen_uniform_keys(seed, count).tolist()


def derive_seed(master: int, *parts: int) -> int:
    """Stable per-phase / per-thread seed derivation."""
    x = master & MASK64
    for p in parts:
        x = (x * 0x9E3779B97F4A7C15 + p + 1) & MASK64
        x ^= x >> 29
    return x
