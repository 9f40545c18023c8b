# sim/seeding.py
from typing import List, Tuple

import numpy as np


def path_rng(master_seed: int, stream_index: int) -> np.random.Generator:
    """Independent generator for one path (or antithetic pair) from (master seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(stream_index)]))


def path_noise(master_seed: int, path_index: int, steps: int, dim: int, antithetic: bool = False) -> np.ndarray:
    """
    Standard Gaussian increments (steps, dim) for one path.

    With antithetic pairing paths 2i and 2i+1 share the stream of pair i,
    the odd path using the negated draws.
    """
    if antithetic:
        noise = path_rng(master_seed, path_index // 2).standard_normal((steps, dim))
        return -noise if path_index % 2 else noise
    return path_rng(master_seed, path_index).standard_normal((steps, dim))


def block_noise(master_seed: int, start: int, stop: int, steps: int, dim: int, antithetic: bool = False) -> np.ndarray:
    return np.stack([path_noise(master_seed, i, steps, dim, antithetic) for i in range(start, stop)])


def block_ranges(n_paths: int, block_size: int) -> List[Tuple[int, int]]:
    """Fixed path-index blocks [b*B, (b+1)*B); independent of the worker count."""
    return [(s, min(s + block_size, n_paths)) for s in range(0, n_paths, block_size)]
