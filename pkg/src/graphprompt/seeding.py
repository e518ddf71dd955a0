"""Seed plumbing: every randomized operation is a pure function of (inputs, seed)."""

from __future__ import annotations

import numpy as np

RngLike = "int | np.random.Generator | None"


def as_rng(rng) -> np.random.Generator:
    """Normalize an int seed or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def child_rng(seed: int, *salts: int) -> np.random.Generator:
    """Derive an independent stream from a base seed and integer salts."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, salts)]))


def child_seed(seed: int, *salts: int) -> int:
    """Derive a plain integer seed the same way `child_rng` derives streams."""
    state = np.random.SeedSequence([int(seed), *map(int, salts)]).generate_state(1)
    return int(state[0])
