"""Deterministic RNG streams derived from one global seed plus string labels.

Every randomized component takes the single run seed and derives its own
stream by mixing in a stable label such as ``"lsh/table/7"``. Streams are
therefore independent of construction order and identical across reruns.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def label_entropy(label: str) -> int:
    """Stable 64-bit digest of a label. Not affected by PYTHONHASHSEED."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & _U64, label_entropy(label)])


def stream(seed: int, label: str) -> np.random.Generator:
    """Generator for the stream identified by (seed, label)."""
    return np.random.default_rng(seed_sequence(seed, label))


def child_seed(seed: int, label: str) -> int:
    """A derived 64-bit seed, for components that want an integer seed."""
    return int(seed_sequence(seed, label).generate_state(1, np.uint64)[0])
