"""Seed derivation and an order-preserving parallel map.

Replicate ``i`` of a run with master seed ``s`` draws from
``SeedSequence(s, spawn_key=(i,))``. Work is cut into fixed-size blocks that
do not depend on the worker count, and results are concatenated by block
index, so outputs are bit-identical for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 10_000


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def blocks(total: int, block_size: int = BLOCK_SIZE) -> list:
    """``[(index, size), ...]`` covering ``total`` items."""
    out = []
    start, i = 0, 0
    while start < total:
        size = min(block_size, total - start)
        out.append((i, size))
        start += size
        i += 1
    return out


def parallel_map(fn: Callable, items: Sequence, workers: int | None = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool (numpy releases the GIL)."""
    items = list(items)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_blocks(draw: Callable, total: int, seed: int, workers: int | None = 1, block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Concatenate ``draw(size, rng)`` over fixed blocks with per-block derived seeds."""
    parts = parallel_map(lambda b: draw(b[1], replicate_rng(seed, b[0])), blocks(total, block_size), workers)
    return np.concatenate(parts) if parts else np.empty(0)
