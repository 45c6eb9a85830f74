"""Process-based task fan-out with order-preserving collection.

Results are merged by task index, so the outcome is identical for any
worker count; parallelism only changes wall time.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, Iterable, TypeVar

from .errors import ConfigurationError

ENV_MAX_WORKERS = "BAYESMR_MAX_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_max_workers(requested: int | None) -> int:
    """Explicit request, else the BAYESMR_MAX_WORKERS variable, else 1."""
    if requested is None:
        env = os.environ.get(ENV_MAX_WORKERS)
        if env is None or env == "":
            return 1
        try:
            requested = int(env)
        except ValueError:
            raise ConfigurationError(
                f"{ENV_MAX_WORKERS} must be an integer, got {env!r}"
            ) from None
    if requested < 1:
        raise ConfigurationError(f"max_workers must be at least 1, got {requested}")
    return requested


def run_tasks(fn: Callable[[T], R], tasks: Iterable[T], max_workers: int | None = None) -> list[R]:
    """Apply ``fn`` to each task, in processes when max_workers > 1.

    ``fn`` and the tasks must be picklable when running in parallel.  The
    returned list follows task order regardless of completion order.
    """
    items = list(tasks)
    workers = resolve_max_workers(max_workers)
    if workers == 1 or len(items) <= 1:
        return [fn(t) for t in items]
    results: list[R | None] = [None] * len(items)
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        futures = {pool.submit(fn, t): i for i, t in enumerate(items)}
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
    return results  # type: ignore[return-value]
