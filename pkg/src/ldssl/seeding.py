"""Deterministic RNG derivation.

Every random draw in the package flows from a single root seed through a
named sub-stream, so any run is reproducible from its seed alone and
independent streams never alias (fold shuffling vs. weight init vs. anchor
draws, etc.).
"""

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_seed_sequence(root_seed, *path) -> np.random.SeedSequence:
    """Build a SeedSequence for the sub-stream named by ``path``."""
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(_tag_to_int(tag) for tag in path)
    return np.random.SeedSequence(entropy)


def derive_rng(root_seed, *path) -> np.random.Generator:
    """A fresh Generator for the sub-stream named by ``path``."""
    return np.random.default_rng(derive_seed_sequence(root_seed, *path))
