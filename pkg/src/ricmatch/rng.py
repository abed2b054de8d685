"""Seeded random streams.

All randomness goes through Philox-4x64, numpy's counter-based 64-bit
bit generator.  A stream is named by ``(seed, *keys)``; the keys become the
``SeedSequence`` spawn key, so stream ``(seed, "gen", 3)`` never changes
when another stream such as ``(seed, "gen", 4)`` is added.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & _MASK64


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit seed for a child stream, for places that store plain ints."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
