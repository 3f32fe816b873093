"""Worker-pool helpers shared by the sweeps."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable

WORKERS_ENV = "BCECHOICE_WORKERS"


def worker_count(requested: int | None = None) -> int:
    """Requested count, else ``$BCECHOICE_WORKERS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def parallel_map(fn: Callable, items: Iterable, workers: int | None = None,
                 chunksize: int = 1) -> list:
    """``list(map(fn, items))``, spread over processes when ``workers > 1``.

    Results come back in input order, so reductions over them are
    deterministic whatever the pool size.
    """
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
