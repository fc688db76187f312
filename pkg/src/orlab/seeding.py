"""Seed plumbing shared by every stochastic component."""

import hashlib
from collections.abc import Sequence

import numpy as np

SeedLike = int | Sequence[int] | np.random.Generator


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Return `seed` if it already is a Generator, else a fresh PCG64 from it."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(*parts: int | str) -> int:
    """
    Stable 63-bit seed from a tuple of labels.

    Used to give each (cell, seed, stage) its own stream without depending
    on Python's randomized string hashing.
    """
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
