"""Seeding.

Every random draw goes through numpy's ``Generator`` on the PCG64 bit
generator; normal variates use numpy's ziggurat sampler. Child seeds are
derived with ``numpy.random.SeedSequence``: the cell seed of a sweep is the
SeedSequence with entropy ``master`` and spawn key ``(rho_index, m_index,
trial_index)``. SeedSequence hashes entropy and key with a fixed mixing
function, so a cell can be reproduced in isolation.
"""
from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence | np.random.Generator | None"


def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master: int, *key: int) -> np.random.SeedSequence:
    """Child seed for ``key`` under ``master`` (independent of evaluation order)."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))


def cell_seed(master: int, rho_index: int, m_index: int, trial: int) -> np.random.SeedSequence:
    return derive_seed(master, rho_index, m_index, trial)


def seed_int(seq: np.random.SeedSequence) -> int:
    """A 64-bit integer view of a SeedSequence, for reporting."""
    return int(seq.generate_state(1, dtype=np.uint64)[0])
