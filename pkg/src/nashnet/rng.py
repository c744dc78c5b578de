"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, domain, *index)``, so a
given batch, chunk or game always draws the same numbers no matter how the
work is split across workers. Domains keep training, test, initialization and
transformation draws disjoint.
"""
from __future__ import annotations

import numpy as np

TRAIN_GAMES = 1
TRAIN_ACTIONS = 2
TEST_GAMES = 3
INIT = 4
TRANSFORM = 5
AXIOMS = 6

SEED_MASK = (1 << 64) - 1


def stream(seed: int, domain: int, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(domain, *index))
    return np.random.Generator(np.random.Philox(ss))
