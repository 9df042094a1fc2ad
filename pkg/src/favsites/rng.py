"""Seeded, order-independent random streams.

Every replicate draws from its own Philox stream. The stream key is derived
from ``(master_seed, *labels)`` through :class:`numpy.random.SeedSequence`, so a
replicate's numbers do not depend on how many other replicates ran before it
or on which worker ran it.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["label_code", "replicate_seed", "generator", "chunk_sizes"]


def label_code(label) -> int:
    """Map an int or string label to a non-negative integer, stably."""
    if isinstance(label, (bool, np.bool_)):
        return int(label)
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer labels must be non-negative")
        return int(label)
    if isinstance(label, float):
        return zlib.crc32(repr(label).encode())
    if isinstance(label, str):
        return zlib.crc32(label.encode())
    raise TypeError(f"unsupported stream label {label!r}")


def replicate_seed(master_seed: int, *labels) -> int:
    """64-bit seed for the stream named by ``labels`` under ``master_seed``."""
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(label_code(x) for x in labels))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit replicate seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def chunk_sizes(first: int = 1024, cap: int = 1 << 17):
    """Doubling chunk schedule shared by every sequential walker.

    Both kernel backends consume draws in exactly these chunks, which is what
    keeps their outputs identical for a given seed.
    """
    size = first
    while True:
        yield size
        size = min(2 * size, cap)
