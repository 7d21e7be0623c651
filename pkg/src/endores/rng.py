"""Seed derivation for reproducible, order-independent replication streams."""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (state is advanced by the gamma first)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Sub-seed for stream ``index`` of ``master``: element ``index`` of the
    SplitMix64 sequence started at ``master``.

    Any replication can be regenerated on its own, so serial and parallel
    evaluation see the same draws.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    return splitmix64((master + index * GOLDEN_GAMMA) & MASK64)


def name_seed(master: int, name: str) -> int:
    """Seed keyed on a scenario name rather than its list position."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return splitmix64((master ^ int.from_bytes(digest[:8], "big")) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))
