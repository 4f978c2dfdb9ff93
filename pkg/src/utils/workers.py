"""
Bounded worker pool helpers (DXNET_THREADS caps the pool size)
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from config.settings import SYSTEM_CONFIG

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: Optional[int] = None) -> int:
    """Number of worker threads, capped by SYSTEM_CONFIG["threads"]"""
    cap = max(1, int(SYSTEM_CONFIG["threads"]))
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply fn to every item on a thread pool.

    Results come back in input order, so callers stay deterministic
    regardless of scheduling. Falls back to a plain loop for one worker.
    """
    n_workers = worker_count(workers)
    if n_workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
