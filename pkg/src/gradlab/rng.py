"""Seeded substreams.

A single master seed fans out into independent streams keyed by
``(purpose, index)``: ``SeedSequence(seed, spawn_key=(purpose_id, index))``
drives an ``SFC64`` bit generator.  Replicate ``r`` of a sweep always reads
the same stream no matter how many workers run or in which order, which is
what makes CSV output byte-stable.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

PURPOSES = ("dataset", "perturb", "sweep", "oracle", "lemma_lhs", "lemma_rhs", "train", "init", "baseline")


def purpose_id(purpose: str) -> int:
    # crc32 keeps ids stable for ad hoc purposes too
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_id(purpose), int(index)))
    return np.random.Generator(np.random.SFC64(ss))


def n_threads() -> int:
    """Worker cap from ``GRADLAB_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("GRADLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"GRADLAB_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1
