"""Counter-based random streams for reproducible runs.

Every random draw in the library is keyed by three values: the run seed,
a short stream label (e.g. ``"gumbel"``, ``"spsa-delta"``), and an integer
counter (typically the iteration or replicate index).  Each (seed, label,
counter) triple maps to an independent Philox generator, so drawing more
values from one stream can never shift the values seen by another stream,
and iteration ``k`` of an optimizer sees the same noise regardless of how
many draws earlier iterations consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["StreamRng", "derive_key", "derive_seed"]


def derive_key(seed: int, label: str, counter: int) -> int:
    """Derive a stable 128-bit Philox key from (seed, label, counter).

    Uses BLAKE2b rather than Python's ``hash`` so keys are identical
    across platforms and interpreter runs.
    """
    msg = f"{seed & 0xFFFFFFFFFFFFFFFF}/{label}/{counter}".encode()
    digest = hashlib.blake2b(msg, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, label: str, counter: int) -> int:
    """Derive a 64-bit child seed, for runs that spawn sub-runs (e.g.
    one seed per bootstrap replicate)."""
    return derive_key(seed, label, counter) & 0xFFFFFFFFFFFFFFFF


class StreamRng:
    """Named, counter-indexed random streams for a single run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def generator(self, label: str, counter: int = 0) -> np.random.Generator:
        """A fresh generator for (seed, label, counter)."""
        key = derive_key(self.seed, label, int(counter))
        return np.random.Generator(np.random.Philox(key=key))

    def gumbel(self, label: str, counter: int, size) -> np.ndarray:
        """Standard Gumbel(0, 1) draws."""
        return self.generator(label, counter).gumbel(size=size)

    def normal(self, label: str, counter: int, size) -> np.ndarray:
        """Standard normal draws."""
        return self.generator(label, counter).standard_normal(size=size)

    def rademacher(self, label: str, counter: int, size) -> np.ndarray:
        """Uniform +/-1 draws."""
        g = self.generator(label, counter)
        return g.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0

    def integers(self, label: str, counter: int, low: int, high: int, size) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self.generator(label, counter).integers(low, high, size=size)
