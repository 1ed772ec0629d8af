"""Deterministic random streams and an order-preserving process map."""

from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

# Walk ensembles are cut into blocks of this many walks; each block owns one
# stream, so totals never depend on how blocks are spread over workers.
BLOCK_SIZE = 4096


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox generator addressed by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])))


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("LAB_WORKERS", "1") or 1)
    return max(1, int(workers))


_SHARED = None


def _call(args):
    func, item = args
    return func(_SHARED, item)


def pmap(func, items, workers=1, shared=None) -> list:
    """``[func(shared, item) for item in items]``, optionally in forked workers.

    ``shared`` is handed to children through fork inheritance rather than
    pickling, so large read-only state (balls, operators) is cheap to share.
    """
    global _SHARED
    items = list(items)
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [func(shared, it) for it in items]
    _SHARED = shared
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as ex:
            return list(ex.map(_call, [(func, it) for it in items]))
    finally:
        _SHARED = None
