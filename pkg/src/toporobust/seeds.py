"""Deterministic random streams.

Everything stochastic in this package draws from Philox, a 64-bit
counter-based generator whose output is fixed by its key alone.  Keying a
fresh stream per sample makes generation order-independent and lets any
single sample be regenerated in isolation, on any platform.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(*key_parts: int) -> np.random.Generator:
    """Independent Philox stream keyed by up to two integers."""
    if not 1 <= len(key_parts) <= 2:
        raise ValueError("make_rng takes one or two key integers")
    key = np.zeros(2, dtype=np.uint64)
    for i, part in enumerate(key_parts):
        key[i] = np.uint64(int(part) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
