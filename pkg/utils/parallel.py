"""Ordered worker pool for pair-level parallelism."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """`[fn(x) for x in items]`, spread over `jobs` threads; results keep input order.

    numpy releases the GIL in its heavy kernels, so threads are enough here.
    An exception raised by `fn` propagates to the caller.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
