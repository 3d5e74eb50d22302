"""Seeded random streams.

Every randomized routine takes an integer ``seed`` (or an existing
``numpy.random.Generator``) and derives its generator here. Streams are
built on the counter-based Philox bit generator; ``make_rng(seed, n)``
gives the n-th split stream of ``seed`` so that parallel chains or
replicates are reproducible regardless of scheduling.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.Generator | None


def make_rng(seed: SeedLike = None, *stream: int) -> np.random.Generator:
    """Return a generator for ``seed`` and the optional split-stream key.

    Parameters
    ----------
    seed : int, Generator or None
        Base seed. A Generator is returned unchanged when no stream key is
        given, and is used to draw a child seed otherwise.
    *stream : int
        Integers identifying a sub-stream, e.g. a chain or replicate index.
    """
    if isinstance(seed, np.random.Generator):
        if not stream:
            return seed
        base = int(seed.integers(0, 2**63))
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([base, *stream])))
    if seed is None:
        ss = np.random.SeedSequence()
    else:
        ss = np.random.SeedSequence([int(seed), *stream]) if stream else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def seed_of(seed: SeedLike) -> int:
    """Integer seed recorded in reports (-1 when unknown)."""
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return -1
