"""Bounded replica-level parallelism; results come back in submission order."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_replicas(func: Callable[[T], R], jobs: Iterable[T], workers: int = 1) -> list[R]:
    """Apply ``func`` to every job, inline when ``workers == 1``.

    ``func`` must be a module-level function so it can be pickled.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    logger.info("dispatching %d jobs to %d worker processes", len(jobs), workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, jobs))
