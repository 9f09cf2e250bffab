"""
Seeding - Named random streams for reproducible runs

Every random draw in gridfed comes from numpy's PCG64 bit generator
(128-bit state, 64-bit outputs) seeded through ``numpy.random.SeedSequence``
with an integer entropy tuple. The first element after the run seed is
always one of the stream tags below, so streams used for different purposes
never overlap.
"""

import numpy as np

# Stream tags
INIT_SHARED = 1
INIT_PERSONAL = 2
TRAIN_WEATHER = 3
TRAIN_ACTIONS = 4
EVAL_WEATHER = 5
DATA_DUMP = 6


def make_rng(*entropy: int) -> np.random.Generator:
    """Build an independent PCG64 generator from non-negative integers"""
    if any(int(e) < 0 for e in entropy):
        raise ValueError(f"Seed entropy must be non-negative: {entropy}")
    seq = np.random.SeedSequence([int(e) for e in entropy])
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(*entropy: int) -> int:
    """Collapse an entropy tuple into one 63-bit integer seed"""
    seq = np.random.SeedSequence([int(e) for e in entropy])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
