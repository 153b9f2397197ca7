"""Seeded randomness with reproducible sub-streams.

All stochastic code in the package draws from numpy PCG64 generators created
here. Sub-streams are derived from a root seed plus string/int keys, so a
fold, model seed, or classifier seed always gets the same stream regardless
of execution order.

Derivation rule: the root seed (masked to 64 bits) is extended with the
first 8 bytes of sha256(repr(key)) for each key, and the resulting integer
sequence seeds a numpy SeedSequence. ``hash()`` is never used (it is salted
per process).
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_entropy(key: object) -> int:
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit integer seed."""
    return np.random.default_rng(np.random.SeedSequence(seed & _MASK64))


def derive_seed(seed: int, *keys: object) -> int:
    """64-bit seed for the sub-stream identified by ``keys``."""
    entropy = [seed & _MASK64] + [_key_entropy(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def derive_rng(seed: int, *keys: object) -> np.random.Generator:
    """Independent generator for the sub-stream identified by ``keys``."""
    entropy = [seed & _MASK64] + [_key_entropy(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
