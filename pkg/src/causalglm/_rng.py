"""Named, order-independent random substreams."""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _word(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK
    digest = hashlib.blake2b(str(key).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *keys) -> np.random.Generator:
    """Generator keyed by ``(seed, *keys)``; equal keys give equal streams."""
    words = [_word(seed)] + [_word(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit child seed, stable across runs and platforms."""
    state = np.random.SeedSequence([_word(seed)] + [_word(k) for k in keys]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
