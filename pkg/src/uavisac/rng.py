"""Deterministic counter-based random streams.

Every stochastic draw in the simulator comes from a stream keyed by
(master seed, purpose, entity ids..., slot).  Streams are independent of
each other and of evaluation order, so parallel execution or resuming
from a checkpoint cannot change the draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key part: {part!r}")


def stream(seed: int, *key) -> np.random.Generator:
    """Return an independent Generator for (seed, *key).

    Philox is counter-based: the same (seed, key) always reproduces the
    same draws, regardless of how many other streams were consumed.
    """
    spawn_key = tuple(_key_part(p) for p in key)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key) -> int:
    """Collapse (seed, *key) into a single 63-bit integer seed."""
    spawn_key = tuple(_key_part(p) for p in key)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
