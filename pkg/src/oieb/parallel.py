"""Order-preserving process-pool map for independent sweep cells.

The pool size comes from ``OIEB_WORKERS`` (all CPUs when unset). Results
are returned in input order, so merged output does not depend on the number
of workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from .errors import DomainError

WORKERS_ENV = "OIEB_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(env: Optional[dict] = None) -> int:
    env = os.environ if env is None else env
    raw = env.get(WORKERS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> list[R]:
    """``[fn(x) for x in items]``, fanned out over processes when ``workers > 1``.

    ``fn`` must be a picklable top-level function.
    """
    items = list(items)
    n = worker_count() if workers is None else workers
    n = min(n, len(items))
    if n <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
