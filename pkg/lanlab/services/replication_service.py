"""Replication runners: in-process and process-pool."""

import logging
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def available_workers() -> int:
    """Cores usable by this process."""
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


class SequentialRunner:
    """Runs jobs one after another in the calling process."""

    @property
    def workers(self) -> int:
        return 1

    def map(self, fn: Callable[[T], R], jobs: Iterable[T]) -> list[R]:
        return [fn(job) for job in jobs]


class ProcessPoolRunner:
    """Runs jobs on a pool of worker processes.

    ``Executor.map`` yields results in submission order, so the fold over
    replications does not depend on scheduling.
    """

    def __init__(self, workers: int | None = None, chunksize: int = 1):
        """Initialize the runner.

        Args:
            workers: Pool size; defaults to the available cores
            chunksize: Jobs handed to a worker at once
        """
        self._workers = workers or available_workers()
        self.chunksize = chunksize

    @property
    def workers(self) -> int:
        return self._workers

    def map(self, fn: Callable[[T], R], jobs: Iterable[T]) -> list[R]:
        job_list = list(jobs)
        if self._workers == 1 or len(job_list) <= 1:
            return [fn(job) for job in job_list]
        logger.info(f"Dispatching {len(job_list)} jobs to {self._workers} workers")
        with ProcessPoolExecutor(max_workers=self._workers) as pool:
            return list(pool.map(fn, job_list, chunksize=self.chunksize))


def make_runner(workers: int | None) -> SequentialRunner | ProcessPoolRunner:
    """Pick a runner for the requested pool size."""
    if workers is not None and workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    if workers == 1:
        return SequentialRunner()
    return ProcessPoolRunner(workers)
