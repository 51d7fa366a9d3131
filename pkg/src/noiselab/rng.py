"""Seeded random streams with stable substream derivation.

Every source of randomness in the project flows through an RngStream.
A stream is identified by (seed, stream id); the same pair always yields
the same draw sequence, regardless of process, thread count, or what
other streams exist. Substreams are derived by hashing a component name
and index, so independent pipeline stages never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    """A deterministic random stream keyed by (seed, stream)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF,
                                     self.stream & 0xFFFFFFFFFFFFFFFF])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def normal(self, shape=()) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float64)

    def uniform(self, lo: float, hi: float, shape=()) -> np.ndarray:
        return self._gen.uniform(lo, hi, shape)

    def integers(self, lo: int, hi: int, shape=()) -> np.ndarray:
        """Integers in [lo, hi), like numpy's half-open convention."""
        return self._gen.integers(lo, hi, shape)

    def shuffle(self, x: np.ndarray) -> None:
        self._gen.shuffle(x)

    def derive(self, component: str, index: int = 0) -> "RngStream":
        return derive_stream(self.seed, f"{component}/{self.stream}", index)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def stream_id(component: str, index: int = 0) -> int:
    """Stable 64-bit id for a named component substream."""
    h = hashlib.blake2b(f"{component}:{index}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def derive_stream(seed: int, component: str, index: int = 0) -> RngStream:
    """Derive the stream for (component, index) under a root seed."""
    return RngStream(seed, stream_id(component, index))
