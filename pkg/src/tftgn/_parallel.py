"""Thread fan-out helpers for nogil kernels."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from tftgn.exceptions import ValidationError

THREADS_ENV = "TFTGN_THREADS"


def default_threads() -> int:
    """Thread count from ``$TFTGN_THREADS``, else the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValidationError(f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def check_threads(num_threads: int) -> int:
    if int(num_threads) != num_threads or num_threads < 1:
        raise ValidationError(f"num_threads must be a positive integer, got {num_threads}")
    return int(num_threads)


def even_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, n, parts + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(parts)]


def weighted_ranges(indptr: np.ndarray, parts: int) -> list[tuple[int, int]]:
    """Split node range so each part owns roughly equal stored entries."""
    num_nodes = len(indptr) - 1
    targets = np.linspace(0, indptr[-1], parts + 1)
    cuts = np.searchsorted(indptr, targets, side="left").clip(0, num_nodes)
    cuts[0], cuts[-1] = 0, num_nodes
    cuts = np.maximum.accumulate(cuts)
    return [(int(cuts[i]), int(cuts[i + 1])) for i in range(parts)]


def run_ranges(fn: Callable[[int, int], None], ranges: list[tuple[int, int]]) -> None:
    """Call ``fn(lo, hi)`` for every range, one thread per range."""
    if len(ranges) == 1:
        fn(*ranges[0])
        return
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in ranges]:
            fut.result()
