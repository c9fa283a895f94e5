"""Deterministic derived random streams.

Every stochastic operation receives a generator derived from a master seed
plus an integer path (run index, instance index, ...). The generators are
counter-based (Philox), so draws depend only on (master_seed, path) and the
position within the stream; parallel and serial execution therefore see
identical randomness.
"""

import numpy as np


def derive_seedseq(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for (master_seed, *path); same arguments, same draws."""
    return np.random.Generator(np.random.Philox(derive_seedseq(master_seed, *path)))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse (master_seed, *path) into a single sub-seed."""
    return int(derive_seedseq(master_seed, *path).generate_state(1, np.uint64)[0])
