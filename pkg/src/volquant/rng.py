"""Seeded random streams.

The generator is pinned to numpy's PCG64 seeded through ``SeedSequence``.
Child streams are keyed (``spawn_key``) by replicate and attempt index, so a
stream never depends on the order in which work is scheduled.
"""

import numpy as np

RNG_ALGORITHM = f"numpy.random.PCG64 via SeedSequence (numpy {np.__version__})"


def make_rng(seed, *key):
    """Deterministic generator for ``seed`` and an optional stream key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
