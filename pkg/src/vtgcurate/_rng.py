from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*keys: object) -> int:
    """64-bit hash of ``keys`` that is stable across processes (unlike ``hash``)."""
    digest = hashlib.sha256("\x1f".join(map(str, keys)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *keys: object) -> np.random.Generator:
    """Independent generator derived from ``seed`` and an arbitrary key path.

    Results never depend on call order, so work can be reordered or run
    concurrently without changing any draw.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, stable_hash(*keys)]))
