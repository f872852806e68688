"""Keyed random streams.

Every random draw in the simulator comes from a generator keyed by a tuple
of integers (master seed, stream tag, round, device, ...), so results do not
depend on call order or thread scheduling.
"""
from __future__ import annotations

import numpy as np

# stream tags
POPULATION = 11
FEATURES = 12
AVAILABILITY = 21
USAGE = 22
KMEANS = 31
FOREST = 41
GA = 51
INIT = 61
SHUFFLE = 62
SELECTION = 71
SL_ORDER = 72

ARM_CODES = {"cen": 1, "sl": 2, "csfl": 3, "crsfl": 4}


def keyed_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def derive_seed(*key: int) -> int:
    """Collapse a key tuple into a single non-negative integer seed."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint64)[0] >> 1)
