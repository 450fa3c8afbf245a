"""Per-replicate random streams and an order-preserving parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

__all__ = ["replicate_rng", "map_replicates", "resolve_workers"]

T = TypeVar("T")


def replicate_rng(seed: int, rep: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one replicate; depends only on (seed, rep, stream)."""
    ss = np.random.SeedSequence([int(seed), int(rep), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def map_replicates(fn: Callable[[int], T], reps: Iterable[int], workers: int | None = 1) -> list[T]:
    """``[fn(r) for r in reps]``, optionally across processes; output order is fixed."""
    reps = list(reps)
    n = resolve_workers(workers)
    if n == 1 or len(reps) < 2:
        return [fn(r) for r in reps]
    chunk = max(1, len(reps) // (4 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, reps, chunksize=chunk))
