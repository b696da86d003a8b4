from __future__ import annotations

import numpy as np


def replicate_stream(master_seed: int, replicate_index: int, grid_index: int = 0) -> np.random.Generator:
    """Independent counter-based stream keyed by (master seed, grid point, replicate).

    The stream depends on nothing else, so replicates can run in any order or
    on any worker and still draw the same numbers.
    """
    if master_seed < 0 or replicate_index < 0 or grid_index < 0:
        raise ValueError("seed and indices must be non-negative")
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(grid_index), int(replicate_index)))
    return np.random.Generator(np.random.Philox(sequence))


def auxiliary_stream(master_seed: int, label: int) -> np.random.Generator:
    """Stream for work that is not a replicate (oracles, quadrature), kept apart by ``label``."""
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(2**31 - 1, int(label)))
    return np.random.Generator(np.random.Philox(sequence))
