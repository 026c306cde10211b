"""Order-preserving process-pool map with a global worker cap."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

ENV_THREADS = "CAUSAL_GLM_THREADS"

_in_worker = False


def _mark_worker():
    global _in_worker
    _in_worker = True


def worker_count(threads: int | None = None) -> int:
    if _in_worker:
        return 1
    if threads is None:
        env = os.environ.get(ENV_THREADS, "").strip()
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def pmap(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, spread over worker processes when allowed.

    Results come back in input order, so callers stay schedule-independent.
    Work running inside a worker never spawns a nested pool.
    """
    items = list(items)
    workers = min(worker_count(threads), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_mark_worker) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
