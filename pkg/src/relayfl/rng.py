"""Named, independent random substreams.

Every random quantity in a simulation is drawn from a generator keyed by
``(seed, purpose, *keys)`` so that one factor can be varied while all the
others stay frozen (e.g. schemes compared on identical channel draws).
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "placement": 0,
    "shadowing": 1,
    "fading": 2,
    "estimation": 3,
    "fl_data": 4,
    "relay_random": 5,
    "fl_train": 6,
    "fl_sample": 7,
    "fl_init": 8,
    "compute": 9,
}


def substream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    try:
        code = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown RNG purpose {purpose!r}") from None
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, code, *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
