"""Deterministic sub-seed derivation.

Every random stage draws from ``numpy.random.Generator`` built from a
``SeedSequence`` keyed by the user seed plus a stage label, so stages can be
re-run independently and reordering them never changes their streams.
"""
from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def seed_sequence(seed, *labels) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        base = seed
        key = tuple(base.spawn_key)
        entropy = base.entropy
    else:
        entropy = int(seed)
        key = ()
    for lab in labels:
        key = key + ((_label_key(lab) if isinstance(lab, str) else int(lab)),)
    return np.random.SeedSequence(entropy=entropy, spawn_key=key)


def rng_for(seed, *labels) -> np.random.Generator:
    """Generator for ``(seed, labels...)``; also accepts an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed_sequence(seed, *labels))


def sub_seed(seed, *labels) -> int:
    """A plain integer sub-seed, handy for serializing into reports."""
    return int(seed_sequence(seed, *labels).generate_state(1, dtype=np.uint64)[0] >> 1)
