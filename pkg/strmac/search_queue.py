"""Queue for running tree searches over a shard of tasks in parallel."""

from __future__ import annotations

import asyncio
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Final

import attrs

from .const import DEFAULT_WORKERS
from .exceptions import ContractError

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .evolve import HarvestResult
    from .simenv import Scenario

    type SearchFn = Callable[[Scenario, str], HarvestResult]

_LOGGER = logging.getLogger(__name__)

PRIORITY_BOOTSTRAP: Final = 0  # pruned searches feed the first training round
PRIORITY_SEARCH: Final = 1


@attrs.define(eq=False)
class SearchJob:
    """One search to run, with the future its callers wait on."""

    mode: str
    scenario: Scenario
    future: asyncio.Future[HarvestResult]
    priority: int = PRIORITY_SEARCH


class HarvestQueue:
    """
    A central queue for search jobs.

    A central queue that enforces:
      - Priority (pruned bootstrap searches first).
      - A fixed number of workers, each running one search at a time in a
        thread executor.
      - Debouncing repeated jobs: a second request for the same (mode, task)
        waits on the pending job's future.
      - No retries: a failed search is logged and its future carries the error.
    """

    def __init__(self, search_fn: SearchFn, workers: int = DEFAULT_WORKERS) -> None:
        """
        Initialise the queue.

        :param search_fn: Runs one search: (scenario, mode) -> HarvestResult
        :param workers: Number of searches to run concurrently (default=4)
        """
        if workers < 1:
            message = f"workers must be >= 1, got {workers}"
            raise ContractError(message)
        self._search_fn = search_fn
        self._workers = workers

        # Entries are (priority, arrival order, job); arrival order keeps ties FIFO
        self._queue: asyncio.PriorityQueue[tuple[int, int, SearchJob]] = (
            asyncio.PriorityQueue()
        )
        self._arrivals = itertools.count()

        # Key: (mode, task_id), Value: the pending SearchJob
        self._pending_jobs: dict[tuple[str, str], SearchJob] = {}

        self._executor: ThreadPoolExecutor | None = None
        self._worker_tasks: list[asyncio.Task[None]] = []

    @property
    def running(self) -> bool:
        """Whether the worker tasks are started."""
        return bool(self._worker_tasks)

    def start(self) -> None:
        """Start the worker tasks on the running event loop."""
        if self._worker_tasks:
            return
        loop = asyncio.get_running_loop()
        self._executor = ThreadPoolExecutor(
            max_workers=self._workers, thread_name_prefix="strmac-search"
        )
        self._worker_tasks = [
            loop.create_task(self._process_loop()) for _ in range(self._workers)
        ]

    def stop(self) -> None:
        """Stop the workers and release the executor."""
        for task in self._worker_tasks:
            task.cancel()
        self._worker_tasks = []
        if self._executor is not None:
            self._executor.shutdown(wait=False, cancel_futures=True)
            self._executor = None

    async def enqueue(
        self, scenario: Scenario, mode: str, priority: int = PRIORITY_SEARCH
    ) -> HarvestResult:
        """
        Enqueue a search and wait for its result.

        Reuses the pending job's future if the same (mode, task) is queued.
        """
        job_key = (mode, scenario.task_id)
        existing_job = self._pending_jobs.get(job_key)
        if existing_job:
            _LOGGER.debug("Debounce: reusing pending %s search for %s", *job_key)
            return await existing_job.future

        job = SearchJob(
            mode=mode,
            scenario=scenario,
            future=asyncio.get_running_loop().create_future(),
            priority=priority,
        )
        self._pending_jobs[job_key] = job
        await self._queue.put((priority, next(self._arrivals), job))
        return await job.future

    async def _process_loop(self) -> None:
        """Process jobs in priority order until cancelled."""
        loop = asyncio.get_running_loop()
        while True:
            _, _, job = await self._queue.get()
            job_key = (job.mode, job.scenario.task_id)

            try:
                result = await loop.run_in_executor(
                    self._executor, self._search_fn, job.scenario, job.mode
                )
                if not job.future.done():
                    job.future.set_result(result)

            except asyncio.CancelledError:
                if not job.future.done():
                    job.future.cancel()
                raise
            except Exception as exc:
                _LOGGER.exception(
                    "Error running %s search on %s: %s",
                    job.mode,
                    job.scenario.task_id,
                    exc,  # noqa: TRY401
                )
                if not job.future.done():
                    job.future.set_exception(exc)

            finally:
                pending_job = self._pending_jobs.get(job_key)
                if pending_job is job:
                    del self._pending_jobs[job_key]

                self._queue.task_done()


async def harvest_all(
    scenarios: Sequence[Scenario],
    mode: str,
    search_fn: SearchFn,
    workers: int = DEFAULT_WORKERS,
) -> list[HarvestResult]:
    """
    Search every scenario through a HarvestQueue.

    :return: One result per scenario, in the order given
    """
    priority = PRIORITY_BOOTSTRAP if mode == "pruned" else PRIORITY_SEARCH
    queue = HarvestQueue(search_fn, workers=workers)
    queue.start()
    try:
        return list(
            await asyncio.gather(
                *(queue.enqueue(scenario, mode, priority) for scenario in scenarios)
            )
        )
    finally:
        queue.stop()


def harvest_shard(
    scenarios: Sequence[Scenario],
    mode: str,
    search_fn: SearchFn,
    workers: int = DEFAULT_WORKERS,
) -> list[HarvestResult]:
    """Synchronous wrapper around ``harvest_all``; runs its own event loop."""
    if not scenarios:
        return []
    if workers == 1:
        return [search_fn(scenario, mode) for scenario in scenarios]
    return asyncio.run(harvest_all(scenarios, mode, search_fn, workers))
