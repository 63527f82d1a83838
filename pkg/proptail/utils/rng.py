"""
Seed derivation and random variates.

Replication r of an experiment rooted at seed s always draws from the stream
SeedSequence(s, spawn_key=(r,)), so results do not depend on scheduling.
"""
import numpy as np


def child_seed_sequence(root_seed: int, index: int) -> np.random.SeedSequence:
    """SeedSequence for stream `index` under `root_seed`."""
    return np.random.SeedSequence(int(root_seed), spawn_key=(int(index),))


def derive_seed(root_seed: int, index: int) -> int:
    """Integer seed for stream `index`, usable wherever a plain seed is expected."""
    return int(child_seed_sequence(root_seed, index).generate_state(1, dtype=np.uint64)[0])


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def uniform_open_zero(rng: np.random.Generator, size=None):
    """Uniform draws on (0, 1]; `random()` lives on [0, 1) so 1 - U never hits 0."""
    return 1.0 - rng.random(size)


def pareto_one(rng: np.random.Generator, size=None):
    """Pareto(1) variates Z = 1/U, U uniform on (0, 1]."""
    return 1.0 / uniform_open_zero(rng, size)
