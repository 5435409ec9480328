"""Reproducible random streams.

Every random draw in the package comes from numpy's Philox4x64 generator, a
64-bit counter-based bit generator whose output is identical across
platforms. A stream is keyed by a non-negative integer seed plus an optional
tuple of integer stream ids, e.g. ``make_rng(seed, sample_index, epoch)``.
"""

from __future__ import annotations

import numpy as np

from mmssdu.errors import ConfigError

SEED_MASK = (1 << 63) - 1


def _entropy(seed: int, stream: tuple) -> list:
    if seed < 0 or any(int(s) < 0 for s in stream):
        raise ConfigError(f"seeds must be non-negative, got {seed} / {stream}")
    return [int(seed), *(int(s) for s in stream)]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(seed, stream))))


def derive_seed(seed: int, *stream: int) -> int:
    """Child seed for (seed, *stream) as a 63-bit integer."""
    state = np.random.SeedSequence(_entropy(seed, stream)).generate_state(1, dtype=np.uint64)
    return int(state[0]) & SEED_MASK


__all__ = ["derive_seed", "make_rng"]
