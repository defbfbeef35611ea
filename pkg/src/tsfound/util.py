"""Seed-stream derivation and bounded worker parallelism."""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def seed_sequence(root_seed: int, stream: str, *indices: int) -> np.random.SeedSequence:
    """Named sub-stream of the root seed, stable across platforms and runs."""
    tag = zlib.crc32(stream.encode("utf-8"))
    return np.random.SeedSequence([int(root_seed), tag, *map(int, indices)])


def substream(root_seed: int, stream: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root_seed, stream, *indices))


def worker_count() -> int:
    """Worker cap from TSFOUND_THREADS (default 1; minimum 1)."""
    raw = os.environ.get("TSFOUND_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map preserving input order; threads only when TSFOUND_THREADS > 1.

    Tasks must be independently seeded so the result is identical at any
    worker count.
    """
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
