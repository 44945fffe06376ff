"""Deterministic seed derivation.

All randomness in a run flows from one master seed.  Stage- and trial-level
generators are derived by hashing namespace strings into extra entropy words
for a ``numpy.random.SeedSequence``, so results are identical no matter how
work is ordered or parallelized:

    seed_sequence(master, "simulate", "trial", 17)

Two derivations collide only if their full name tuples match.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _name_word(part: object) -> int:
    digest = hashlib.sha256(repr(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed: int, *names: object) -> np.random.SeedSequence:
    """SeedSequence namespaced by the given stage names."""
    return np.random.SeedSequence([int(master_seed)] + [_name_word(n) for n in names])


def generator(master_seed: int, *names: object) -> np.random.Generator:
    """Fresh generator for a named stage of a run."""
    return np.random.default_rng(seed_sequence(master_seed, *names))
