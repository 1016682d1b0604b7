"""Deterministic random-stream derivation.

Every source of randomness in the library is an explicit
``numpy.random.Generator``.  Experiments derive named child streams from a
single root seed so that a run is reproducible end to end: the coordinator,
each party, and each trial get their own independent stream, and the same
(root seed, key path) always yields the same stream on every platform.

String keys are folded to 32-bit integers with CRC-32, which is stable across
processes and Python versions (unlike ``hash``).
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["child_seed", "generator", "derive_seed"]


def _key_word(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("seed key parts must be non-negative")
    return int(part)


def child_seed(root: int, *key: int | str) -> np.random.SeedSequence:
    """Seed sequence for the stream named by ``key`` under ``root``."""
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key_word(k) for k in key))


def generator(root: int, *key: int | str) -> np.random.Generator:
    """PCG64 generator for the stream named by ``key`` under ``root``."""
    return np.random.Generator(np.random.PCG64(child_seed(root, *key)))


def derive_seed(root: int, *key: int | str) -> int:
    """A stable 64-bit root seed for the stream named by ``key``.

    Used where an API takes a root seed rather than a generator (e.g. a
    per-trial seed handed to both sides of a distributed run).
    """
    return int(child_seed(root, *key).generate_state(1, dtype=np.uint64)[0])
