"""Named RNG streams.

Every random draw in the simulator comes from a generator keyed by a tuple
of integers, so that independent consumers (client sampling, local
mini-batching, privacy noise, task generation) never share a stream and a
run is reproducible from one master seed.
"""

from __future__ import annotations

import numpy as np

# stream tags; changing any of these changes every downstream draw
TRAIN_TASK = 11
HOLDOUT_TASK = 13
CLIENT = 17
PARTICIPATION = 19
LOCAL = 23
PRIVACY = 29
META_BATCH = 31
VALIDATION = 37
EVALUATION = 41
INIT = 43


def _as_entropy(key) -> int:
    key = int(key)
    if key < 0:
        raise ValueError(f"seed keys must be non-negative, got {key}")
    return key


def seed_sequence(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_as_entropy(k) for k in keys])


def rng(*keys) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(*keys))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed for the stream named by ``keys``."""
    hi, lo = seed_sequence(*keys).generate_state(2, dtype=np.uint32)
    return ((int(hi) << 32) | int(lo)) & ((1 << 63) - 1)
