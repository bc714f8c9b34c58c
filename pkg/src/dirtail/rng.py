"""Counter-based random streams keyed by integers.

Every stream is a Philox generator whose key is derived from
``(seed, *key)`` through :class:`numpy.random.SeedSequence`.  Two calls with
the same arguments yield bit-identical streams, independent of how work is
scheduled across processes.
"""

from __future__ import annotations

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([check_seed(seed), *(int(k) for k in key)])


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for replication/sub-task ``key`` under ``seed``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))


def spawn(seed: int, n: int, *key: int) -> list[np.random.Generator]:
    """``n`` independent child streams of ``stream(seed, *key)``."""
    children = seed_sequence(seed, *key).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]
