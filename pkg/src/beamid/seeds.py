"""Hierarchical seed streams.

A master seed fans out into one independent generator per randomness source,
so toggling one noise source (say, the detector) never shifts the draws of
another (say, the receiver noise).
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "world": 0,
    "detector": 1,
    "noise": 2,
    "shuffle": 3,
    "dropout": 4,
    "split": 5,
    "init": 6,
}


def stream_rng(master_seed: int, stream: str) -> np.random.Generator:
    """Return the dedicated generator for one named subsystem stream."""
    try:
        key = STREAMS[stream]
    except KeyError:
        raise KeyError(f"unknown seed stream {stream!r}") from None
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(key,)))
