"""Counter-based random streams.

Every draw uses its own Philox generator keyed by ``(seed, purpose, k, p, index)``
through :class:`numpy.random.SeedSequence`, so results do not depend on the
order or the process in which draws are made.
"""
from __future__ import annotations

import numpy as np

SAMPLE = 1
MATRIX = 2
DIAGNOSTIC = 3
ORACLE = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seed and stream keys must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def sample_stream(seed: int, k: int, p: int, index: int) -> np.random.Generator:
    return stream(seed, SAMPLE, k, p, index)
