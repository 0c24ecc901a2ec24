"""Deterministic named RNG substreams.

All randomness in the package flows from one integer root seed. Stages derive
independent generators by hashing a stream name into the seed sequence, so a
single seed reproduces an entire experiment regardless of evaluation order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "spawn_seed"]


def spawn_seed(root_seed: int, name: str) -> int:
    """Derive a deterministic 64-bit child seed for a named stage."""
    tag = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, tag])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator seeded by (root_seed, crc32(name)); stable across runs."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, tag])
    )
