"""Deterministic named RNG sub-streams.

All randomness in a run flows from a single base seed. Each consumer
(vehicle spawning, parameter init, action sampling, ...) gets its own
independent generator keyed by a purpose string plus an integer index,
so drawing more numbers in one stream never shifts another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    # Stable across processes; never use built-in hash() here.
    return zlib.crc32(purpose.encode("utf-8")) & 0xFFFFFFFF


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, purpose, index).

    The same triple always yields the same stream; distinct triples give
    statistically independent streams.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _purpose_key(purpose), int(index)])
    return np.random.default_rng(ss)


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    """Collapse a sub-stream identity to a single integer seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _purpose_key(purpose), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
