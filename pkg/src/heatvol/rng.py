"""Seeded random streams.

All randomness goes through :func:`make_rng`: a PCG64 bit generator (O'Neill,
2014) seeded via ``numpy.random.SeedSequence``. Both algorithms are published
and platform independent, so equal seeds give equal streams everywhere.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent sub-stream."""
    entropy = [int(seed) & _MASK64] + [int(s) & _MASK64 for s in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *stream: int) -> int:
    """A 63-bit integer seed for sub-task ``stream`` of run ``seed``."""
    return int(make_rng(seed, *stream).integers(2 ** 63))
