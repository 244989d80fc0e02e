"""Ordered, thread-capped evaluation of independent tasks."""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from .config import Config

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker count, capped by OCTOOL_THREADS"""
    raw = os.environ.get(Config.ENV_THREADS)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """
    Apply fn to every item, possibly concurrently

    Results come back in input order whatever the completion order.
    """
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
