"""Deterministic random streams.

All stochastic routines draw from a counter-based Philox generator keyed
by (seed, stream).  Distinct streams are statistically independent, and a
given (seed, stream) pair always reproduces the same draws, independent
of how many other streams were consumed first.
"""

import numpy as np


def rng_for(seed, stream=0):
    """Generator for the given (seed, stream) key."""
    seed = int(seed)
    stream = int(stream)
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative integers")
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
    )
