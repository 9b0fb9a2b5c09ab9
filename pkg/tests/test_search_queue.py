"""Tests for the priority search queue."""

from __future__ import annotations

import asyncio
from typing import TYPE_CHECKING
from unittest.mock import MagicMock

import pytest

from strmac.exceptions import ContractError
from strmac.search_queue import (
    PRIORITY_BOOTSTRAP,
    PRIORITY_SEARCH,
    HarvestQueue,
    SearchJob,
    harvest_all,
    harvest_shard,
)

from .conftest import make_scenario, unit

if TYPE_CHECKING:
    from collections.abc import AsyncGenerator

    from strmac.simenv import Scenario


def scenario_named(task_id: str) -> Scenario:
    """A one-agent scenario with the given id."""
    return make_scenario(unit(2, 0), [unit(2, 0)], task_id=task_id)


@pytest.fixture
def search_fn() -> MagicMock:
    """A search stand-in that reports which job it ran."""
    return MagicMock(side_effect=lambda scenario, mode: f"{mode}:{scenario.task_id}")


@pytest.fixture
async def queue(search_fn: MagicMock) -> AsyncGenerator[HarvestQueue]:
    """A two-worker queue, stopped on teardown."""
    harvest_queue = HarvestQueue(search_fn, workers=2)
    yield harvest_queue
    harvest_queue.stop()


async def test_start_is_idempotent(queue: HarvestQueue) -> None:
    """Calling start twice keeps the same workers."""
    queue.start()
    workers = list(queue._worker_tasks)
    queue.start()

    assert queue.running
    assert queue._worker_tasks == workers


def test_stop_without_start_is_safe(search_fn: MagicMock) -> None:
    """Stopping a queue that never started does nothing."""
    harvest_queue = HarvestQueue(search_fn, workers=1)
    harvest_queue.stop()
    assert not harvest_queue.running


def test_needs_a_worker(search_fn: MagicMock) -> None:
    """A queue without workers could never finish a job."""
    with pytest.raises(ContractError):
        HarvestQueue(search_fn, workers=0)


async def test_enqueue_returns_search_result(
    queue: HarvestQueue, search_fn: MagicMock
) -> None:
    """A processed job resolves with the search result and clears pending state."""
    queue.start()
    result = await queue.enqueue(scenario_named("task-00001"), "pruned")

    assert result == "pruned:task-00001"
    search_fn.assert_called_once()
    assert not queue._pending_jobs


async def test_duplicate_job_reuses_pending_future(queue: HarvestQueue) -> None:
    """A search requested while the same one is pending waits on its future."""
    scenario = scenario_named("task-00002")
    future = asyncio.get_running_loop().create_future()
    queue._pending_jobs[("guided", scenario.task_id)] = SearchJob(
        mode="guided", scenario=scenario, future=future
    )

    asyncio.get_running_loop().call_soon(future.set_result, "sentinel")
    result = await queue.enqueue(scenario, "guided")

    assert result == "sentinel"
    # Nothing new was queued.
    assert queue._queue.qsize() == 0


async def test_failed_search_reaches_caller(
    queue: HarvestQueue, search_fn: MagicMock
) -> None:
    """The error goes to the awaiting caller and the workers keep running."""
    search_fn.side_effect = RuntimeError("boom")
    queue.start()

    with pytest.raises(RuntimeError, match="boom"):
        await queue.enqueue(scenario_named("task-00003"), "pruned")

    assert not any(task.done() for task in queue._worker_tasks)
    assert not queue._pending_jobs


async def test_bootstrap_jobs_run_first(search_fn: MagicMock) -> None:
    """Queued bootstrap searches are taken before ordinary ones."""
    harvest_queue = HarvestQueue(search_fn, workers=1)
    later = asyncio.ensure_future(
        harvest_queue.enqueue(scenario_named("task-00010"), "guided", PRIORITY_SEARCH)
    )
    first = asyncio.ensure_future(
        harvest_queue.enqueue(
            scenario_named("task-00011"), "pruned", PRIORITY_BOOTSTRAP
        )
    )
    await asyncio.sleep(0)

    harvest_queue.start()
    try:
        await asyncio.gather(later, first)
    finally:
        harvest_queue.stop()

    ran = [call.args[0].task_id for call in search_fn.call_args_list]
    assert ran == ["task-00011", "task-00010"]


async def test_harvest_all_keeps_task_order(search_fn: MagicMock) -> None:
    """Results come back in the order the tasks were given."""
    scenarios = [scenario_named(f"task-{i:05d}") for i in range(6)]
    results = await harvest_all(scenarios, "pruned", search_fn, workers=3)

    assert results == [f"pruned:task-{i:05d}" for i in range(6)]


def test_harvest_shard_inline_with_one_worker(search_fn: MagicMock) -> None:
    """A single worker searches in the calling thread, in order."""
    scenarios = [scenario_named(f"task-{i:05d}") for i in range(3)]

    assert harvest_shard(scenarios, "guided", search_fn, workers=1) == [
        "guided:task-00000",
        "guided:task-00001",
        "guided:task-00002",
    ]
    assert harvest_shard([], "guided", search_fn) == []


def test_harvest_shard_parallel_matches_inline(search_fn: MagicMock) -> None:
    """Running through the queue gives the same results as running inline."""
    scenarios = [scenario_named(f"task-{i:05d}") for i in range(5)]
    assert harvest_shard(scenarios, "pruned", search_fn, workers=4) == harvest_shard(
        scenarios, "pruned", search_fn, workers=1
    )
