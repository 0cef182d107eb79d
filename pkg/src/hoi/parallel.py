"""Data-parallel helpers.

The width is capped by the ``HOI_THREADS`` environment variable (default 1).
NumPy releases the GIL inside ufuncs, so a thread pool over independent
chunks of oscillators gives real speedups for the nested-sum kernels.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("HOI_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def pmap(fn, items):
    """Map ``fn`` over ``items`` preserving order, in parallel when allowed."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
