"""Random streams. Everything draws from Philox, a counter-based generator,
so any stream can be re-derived from ``(seed, *keys)`` alone."""

import numpy as np

GENERATOR_NAME = "numpy.random.Philox"


def make_rng(seed=None, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``seed`` and spawn ``keys``.

    An existing Generator is passed through untouched when no keys are given.
    """
    if isinstance(seed, np.random.Generator):
        if not keys:
            return seed
        seed = int(seed.integers(2**63))
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
