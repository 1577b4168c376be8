"""Seeded, portable random streams.

Every stream is ``numpy.random.Generator(Philox(key=seed))``: Philox4x64-10
keyed directly by the 64-bit seed with a zero counter, so another language
with a Philox4x64-10 implementation reproduces the raw 64-bit output words.
Sub-stream seeds are derived with SplitMix64:

    z += 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^= z >> 31
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index) -> int:
    """Seed for sub-stream ``index`` (an int, or a string tag hashed by CRC32)."""
    if isinstance(index, str):
        index = zlib.crc32(index.encode())
    return splitmix64((int(base_seed) & MASK64) ^ splitmix64(int(index) & MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
