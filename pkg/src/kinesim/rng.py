"""Labeled random-stream derivation from a single root seed.

Every consumer asks for a stream by label path, e.g. ``("access", 3, 17)``.
Streams depend only on the root seed and the labels, so adding a consumer
never shifts the draws seen by another one.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "KINESIM_SEED"
DEFAULT_SEED = 0


def _label_word(label) -> int:
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *labels) -> np.random.Generator:
    key = tuple(_label_word(label) for label in labels)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def root_seed(explicit: int | None = None) -> int:
    """Resolve the root seed: explicit value, then $KINESIM_SEED, then 0."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return DEFAULT_SEED
