"""Deterministic random streams.

Every stochastic piece of a run draws from its own stream, derived from the
master seed and a text label:

    child = mix64(mix64(master_seed) ^ label_hash)

``label_hash`` is the first 8 bytes (little-endian) of the BLAKE2b digest of
the UTF-8 label and ``mix64`` is the SplitMix64 finalizer (constants below).
Streams are numpy ``PCG64`` generators seeded with the child value, so
results do not depend on how work is split across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 output function applied to ``x + GOLDEN``."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def label_hash(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


def seed_split(master_seed: int, label: str) -> int:
    """Child seed for ``label`` under ``master_seed``; identical inputs give identical output."""
    return mix64(mix64(int(master_seed) & MASK64) ^ label_hash(label))


def stream(master_seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_split(master_seed, label)))
