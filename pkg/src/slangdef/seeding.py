"""Named sub-seed derivation.

All randomness in a run flows from one master seed; each component (split, init,
shuffle, ...) gets its own stream derived here, so components stay independently
reproducible no matter what order they execute in.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """64-bit sub-seed for `name`, stable across platforms and runs."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derived_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, name))
