"""Named random sub-streams derived from one top-level seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, bytes):
        return zlib.crc32(part)
    return int(part) & 0xFFFFFFFF


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the stream ``names`` under ``seed``.

    Changing the draws made on one stream never perturbs another, so stages
    (extraction, sampling, search) can evolve independently.
    """
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def derive_seed(seed: int, *names) -> int:
    return int(seed_sequence(seed, *names).generate_state(1, dtype=np.uint32)[0])
