from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

# Work is always split into these fixed-size chunks so results never
# depend on the worker count.
PIXEL_CHUNK = 4096


def chunk_slices(n: int, size: int = PIXEL_CHUNK) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def ordered_map(fn: Callable[..., T], items: Sequence, threads: int = 1) -> list[T]:
    """Map ``fn`` over ``items``, returning results in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
