"""Deterministic chunked parallel map over realization indices.

Realizations are split into fixed-size chunks that do not depend on the worker count;
results come back in chunk order, so any reduction over them is reproducible bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def chunks(count: int, size: int, start: int = 0) -> list[range]:
    if count < 0 or size < 1:
        raise ValueError("count must be >= 0 and chunk size >= 1")
    return [range(start + i, start + min(i + size, count)) for i in range(0, count, size)]


def ordered_map(func: Callable, items: Sequence, workers: int = 1) -> list:
    """``[func(item) for item in items]``, optionally on a process pool; order preserved."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
