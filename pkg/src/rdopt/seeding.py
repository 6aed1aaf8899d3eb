"""Seed handling: one master seed split into named, reproducible streams."""

from __future__ import annotations

import zlib

import numpy as np


def as_generator(rng) -> np.random.Generator:
    """Coerce ``None``/int/SeedSequence/Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def stream_seed(master: int, *names) -> np.random.SeedSequence:
    """Seed sequence for the stream identified by ``names`` under ``master``.

    Names may be strings or integers; strings are hashed with CRC32 so the
    mapping is stable across interpreter runs.
    """
    key = []
    for name in names:
        if isinstance(name, str):
            key.append(zlib.crc32(name.encode("utf-8")))
        else:
            key.append(int(name))
    return np.random.SeedSequence(int(master), spawn_key=tuple(key))


def stream(master: int, *names) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master, *names))


def child_seeds(rng, n: int) -> list:
    """Draw ``n`` independent integer seeds from ``rng``."""
    g = as_generator(rng)
    return [int(s) for s in g.integers(0, 2**63 - 1, size=n, dtype=np.int64)]
