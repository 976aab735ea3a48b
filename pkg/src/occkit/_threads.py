"""Thread-count resolution and order-preserving parallel map.

Parallelism is only ever applied across independent work items (channels,
intervals, grids) and results are combined in item order, so outputs are
bit-identical for every thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "OCC_THREADS"


def resolve_threads(requested: int | None) -> int:
    """Pick the worker count: explicit value, then OCC_THREADS, then 1."""
    if requested is not None:
        value = requested
    else:
        value = int(os.environ.get(THREADS_ENV, "1"))
    if value < 1:
        raise ValueError(f"thread count must be >= 1, got {value}")
    return value


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    """map() preserving item order, threaded when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
