"""Latin hypercube sampling of the unit cube.

The jittered construction: for each dimension independently, draw a uniform
permutation of the n strata [j/n, (j+1)/n) and place one point uniformly at
random inside each stratum.  Every dimension therefore hits every stratum
exactly once.
"""

from __future__ import annotations

import numpy as np


def latin_hypercube(n: int, k: int,
                    seed: int | np.random.Generator) -> np.ndarray:
    """Draw n Latin hypercube samples of [0, 1)^k.

    Returns an (n, k) array.  Deterministic given an integer seed; callers
    that pass a Generator share its stream.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    points = np.empty((n, k))
    for d in range(k):
        strata = rng.permutation(n)
        jitter = rng.random(n)
        points[:, d] = (strata + jitter) / n
    return points
