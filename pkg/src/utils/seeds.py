"""
Seed splitting for reproducible generation.

Every random stream in a run is derived from a single master seed:

    derive_seed(master, stream, *path)
        = SeedSequence(entropy=master, spawn_key=(SEED_STREAMS[stream], *path))
          .generate_state(1, uint64)[0]

so tree ``i`` of a scene uses ``derive_seed(master, "tree", i)`` and the IPP
sampler uses ``derive_seed(master, "ipp")``. Streams never share state and the
mapping is stable across platforms and numpy versions.
"""

import numpy as np

from src.config.simulation_config import SEED_STREAMS

MAX_SEED = 2**64 - 1


def derive_seed(master_seed: int, stream: str, *path: int) -> int:
    if stream not in SEED_STREAMS:
        raise KeyError(f"unknown seed stream {stream!r}")
    if not 0 <= master_seed <= MAX_SEED:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    sequence = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(SEED_STREAMS[stream], *path)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
