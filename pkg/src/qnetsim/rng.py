"""Counter-based random numbers: u = f(seed, trial index, draw index).

Every trial's randomness depends only on its own index, so any split of the
trial range into shards reproduces the sequential run bit for bit.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def uniforms(seed: int, trial_index, draw: int) -> np.ndarray:
    """Uniform doubles in [0, 1) for each trial index and a fixed draw slot."""
    key = splitmix64(np.uint64(seed % 2**64) ^ splitmix64(np.uint64(draw)))
    with np.errstate(over="ignore"):
        x = splitmix64(key ^ (np.asarray(trial_index, dtype=np.uint64) * _GOLDEN))
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53
