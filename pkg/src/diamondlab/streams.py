"""Counter-based random streams keyed by (seed, purpose, index, ...).

Every stream is an independent Philox generator whose key is derived from
the master seed and a spawn key, so any sample can be regenerated without
touching shared RNG state and results never depend on how work is split
between threads.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode())


def stream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(seed, spawn_key=(_purpose_code(purpose),) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunks(total: int, size: int):
    """Fixed (start, stop) blocks of sample indices, independent of worker count."""
    for start in range(0, total, size):
        yield start, min(start + size, total)
