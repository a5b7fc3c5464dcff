"""Deterministic keyed random streams.

Every stochastic draw in the package comes from a Philox (counter-based)
generator whose key is derived from the master seed and a tuple of small
integers naming *what* the draw is for: e.g. (ITERATION, k, PERTURBATION, i,
IDIO). Two calls with the same key always see the same numbers, independent
of thread scheduling or of which other streams were consumed before.
"""

import numpy as np

__all__ = ["stream", "IDIO", "COMMON", "ACTION", "INIT", "SPHERE", "ITERATION", "EVAL", "EPISODE"]

# channels within one episode
IDIO, COMMON, ACTION, INIT = 0, 1, 2, 3
# namespaces
SPHERE = 10
ITERATION = 11
EVAL = 12
EPISODE = 13

_MASK64 = (1 << 64) - 1


def stream(seed, *key):
    """Philox generator for ``(seed, *key)``; ``seed`` is taken modulo 2**64."""
    if any(int(k) < 0 for k in key):
        raise ValueError(f"stream keys must be non-negative, got {key}")
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
