"""Deterministic labeled random streams.

Every stochastic draw in the package comes from a generator addressed by a
``(seed, label)`` pair.  The same pair always yields the same stream, and
distinct labels yield statistically independent streams, so a whole session
can be replayed bit-for-bit from one 64-bit seed while subsystems (photon
statistics, detector noise, shuffles, ...) stay decoupled.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def stream(seed: int, label: str) -> np.random.Generator:
    """Return the PCG64 generator identified by ``(seed, label)``."""
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([seed & _MASK64, *words])
    return np.random.Generator(np.random.PCG64(ss))


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a fresh non-negative 63-bit seed from an existing stream."""
    return int(rng.integers(0, 2**63 - 1, dtype=np.int64))


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    """n unbiased bits as a uint8 array."""
    return rng.integers(0, 2, size=n, dtype=np.uint8)
