"""Deterministic derivation of random streams from a single master seed.

Every piece of randomness in an experiment is drawn from a generator seeded
by ``stream_seed(master, tag, index)``.  The derivation hashes the triple
with SHA-256, so streams for different purposes or sample indices never
collide and results are reproducible across platforms and process counts.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_seed(master: int, tag: str, index: int = 0) -> int:
    """64-bit seed for the stream identified by (master, tag, index)."""
    digest = hashlib.sha256(f"{master}:{tag}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & _MASK64


def make_rng(master: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for the derived stream."""
    return np.random.default_rng(stream_seed(master, tag, index))
