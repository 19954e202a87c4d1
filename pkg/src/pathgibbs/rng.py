"""Reproducible random streams.

Every random draw in the package comes from a Philox generator keyed by the
root seed and a tuple of integers naming the stream (purpose tag, replica
index, ...). A replica's stream therefore depends only on (seed, key), so
chunking and thread-pool size never change results.
"""

from __future__ import annotations

import numpy as np

SIM = 1
KERNEL = 2
TILE = 3
INIT = 4
PROBE = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
