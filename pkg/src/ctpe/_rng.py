"""Named, splittable random streams.

Every random draw in the package goes through :func:`stream`, which maps a
``(seed, purpose)`` pair to an independent Philox generator.  Philox is
counter-based, so streams for different purposes never overlap and a given
pair always reproduces the same numbers.
"""

from __future__ import annotations

import numpy as np

# stable ids; never renumber, serialized outputs depend on them
PURPOSES = {
    "init": 0,
    "increments": 1,
    "reward": 2,
    "burnin": 3,
    "aux": 4,
}


def stream(seed: int, purpose: str) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose {purpose!r}")
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(PURPOSES[purpose],))
    return np.random.Generator(np.random.Philox(ss))
