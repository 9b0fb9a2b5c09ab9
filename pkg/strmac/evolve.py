"""
Execution-path tree search and the self-evolving data pipeline.

Every node of the tree is an agent-sequence prefix. A search visits children in
ascending agent id, rolls out each visited prefix once, and (when pruning)
stops descending below a node whose path already predicts the label.
"""

from __future__ import annotations

import functools
import logging
import math
from enum import Enum
from itertools import pairwise
from typing import TYPE_CHECKING, Any

import attrs
import numpy as np

from .const import (
    DEFAULT_BOOTSTRAP_FRACTION,
    DEFAULT_ROUNDS,
    DEFAULT_SEARCH_CAP,
    DEFAULT_TOP_K,
    DEFAULT_WORKERS,
    SEARCH_MODES,
)
from .core import ExecutionPath, SystemState, best_path, count_paths, path_to_record
from .exceptions import ContractError, SearchCapError
from .route import RouterModel, run_inference, top_k_agents
from .search_queue import harvest_shard
from .simenv import rollout
from .train import TrainConfig, TrainingExample, harvest_examples, init_router, train

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .simenv import Scenario

_LOGGER = logging.getLogger(__name__)


class NodeStatus(Enum):
    """Where a tree node stands in the search."""

    UNEXPLORED = "unexplored"
    SOLVED = "solved"
    PRUNED = "pruned"
    EXHAUSTED = "exhausted"


@attrs.define(eq=False)
class PathTreeNode:
    """
    A prefix of agent selections.

    ``state`` is None for children the router declined to expand; they are
    recorded with status PRUNED and never rolled out.
    """

    prefix: tuple[int, ...]
    state: SystemState | None
    status: NodeStatus = NodeStatus.UNEXPLORED
    children: list[PathTreeNode] = attrs.field(factory=list)

    def walk(self) -> list[PathTreeNode]:
        """This node and all its descendants, depth first."""
        nodes = [self]
        for child in self.children:
            nodes.extend(child.walk())
        return nodes


@attrs.frozen(eq=False)
class HarvestResult:
    """Outcome of searching one task's path tree."""

    task_id: str
    mode: str
    valid_paths: tuple[ExecutionPath, ...]
    best_path: ExecutionPath | None
    nodes_expanded: int
    paths_evaluated: int
    full_space: int
    solved_nodes: int
    pruned_nodes: int
    tree: PathTreeNode = attrs.field(repr=False)

    @property
    def sampled_fraction(self) -> float:
        """Share of the full path space that was rolled out."""
        return self.paths_evaluated / self.full_space

    def to_record(self) -> dict[str, Any]:
        """Serialise without the tree."""
        return {
            "task_id": self.task_id,
            "mode": self.mode,
            "valid_paths": [path_to_record(path) for path in self.valid_paths],
            "best_path": path_to_record(self.best_path) if self.best_path else None,
            "nodes_expanded": self.nodes_expanded,
            "paths_evaluated": self.paths_evaluated,
            "full_space": self.full_space,
            "solved_nodes": self.solved_nodes,
            "pruned_nodes": self.pruned_nodes,
            "sampled_fraction": self.sampled_fraction,
        }


def _check_cap(scenario: Scenario, search_cap: int) -> None:
    if scenario.n_agents > search_cap:
        raise SearchCapError(scenario.n_agents, search_cap)


def _tree_search(
    scenario: Scenario,
    mode: str,
    *,
    prune_solved: bool,
    select: Callable[[SystemState], set[int]] | None = None,
) -> HarvestResult:
    root = PathTreeNode(prefix=(), state=scenario.initial_state())
    valid: list[ExecutionPath] = []
    counts = {"expanded": 0, "evaluated": 0, "solved": 0, "pruned": 0}

    def expand(node: PathTreeNode) -> None:
        assert node.state is not None
        counts["expanded"] += 1
        chosen = select(node.state) if select is not None else None
        for agent in sorted(node.state.remaining):
            prefix = (*node.prefix, agent)
            if chosen is not None and agent not in chosen:
                node.children.append(PathTreeNode(prefix, None, NodeStatus.PRUNED))
                counts["pruned"] += 1
                continue

            path = rollout(scenario, prefix)
            counts["evaluated"] += 1
            child = PathTreeNode(prefix, SystemState(scenario.task, path.steps))
            node.children.append(child)

            if path.is_valid:
                valid.append(path)
                child.status = NodeStatus.SOLVED
                counts["solved"] += 1
                if prune_solved:
                    _LOGGER.debug("Solved at %s; pruning its subtree", prefix)
                    continue
            if child.state.remaining:
                expand(child)
            if child.status is NodeStatus.UNEXPLORED:
                child.status = NodeStatus.EXHAUSTED

        if node.status is NodeStatus.UNEXPLORED:
            node.status = NodeStatus.EXHAUSTED

    expand(root)
    result = HarvestResult(
        task_id=scenario.task_id,
        mode=mode,
        valid_paths=tuple(valid),
        best_path=best_path(valid),
        nodes_expanded=counts["expanded"],
        paths_evaluated=counts["evaluated"],
        full_space=count_paths(scenario.n_agents),
        solved_nodes=counts["solved"],
        pruned_nodes=counts["pruned"],
        tree=root,
    )
    _LOGGER.debug(
        "%s search on %s: %s/%s paths, %s valid",
        mode,
        scenario.task_id,
        result.paths_evaluated,
        result.full_space,
        len(result.valid_paths),
    )
    return result


def exhaustive_search(
    scenario: Scenario, search_cap: int = DEFAULT_SEARCH_CAP
) -> HarvestResult:
    """
    Roll out every nonempty agent permutation of the task.

    :raises SearchCapError: if the task has more agents than ``search_cap``
    """
    _check_cap(scenario, search_cap)
    return _tree_search(scenario, "exhaustive", prune_solved=False)


def pruned_search(
    scenario: Scenario, search_cap: int = DEFAULT_SEARCH_CAP
) -> HarvestResult:
    """
    Depth-first search that stops descending below any correct prefix.

    Because token counts are positive, a correct path's descendants always cost
    more, so the best path found equals the exhaustive best path.

    :raises SearchCapError: if the task has more agents than ``search_cap``
    """
    _check_cap(scenario, search_cap)
    return _tree_search(scenario, "pruned", prune_solved=True)


def router_guided_search(
    scenario: Scenario,
    model: RouterModel,
    k: int = DEFAULT_TOP_K,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> HarvestResult:
    """
    Pruned search that only expands the router's top-k agents at each node.

    Selected children are still visited in ascending id, so k = N reproduces
    ``pruned_search`` exactly.

    :raises ContractError: if k is outside [1, N]
    :raises SearchCapError: if the task has more agents than ``search_cap``
    """
    _check_cap(scenario, search_cap)
    if not 1 <= k <= scenario.n_agents:
        message = f"k must be within [1, {scenario.n_agents}], got {k}"
        raise ContractError(message)

    def select(state: SystemState) -> set[int]:
        return set(top_k_agents(model, state, k))

    return _tree_search(scenario, "guided", prune_solved=True, select=select)


def search(
    scenario: Scenario,
    mode: str,
    *,
    model: RouterModel | None = None,
    k: int = DEFAULT_TOP_K,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> HarvestResult:
    """
    Run the named search mode on one scenario.

    :raises ContractError: for an unknown mode or a guided search without model
    """
    if mode == "exhaustive":
        return exhaustive_search(scenario, search_cap)
    if mode == "pruned":
        return pruned_search(scenario, search_cap)
    if mode == "guided":
        if model is None:
            message = "Router-guided search needs a router model"
            raise ContractError(message)
        return router_guided_search(scenario, model, k, search_cap)
    message = f"Unknown search mode {mode!r}; choose from {SEARCH_MODES}"
    raise ContractError(message)


@attrs.frozen
class PipelineConfig:
    """Settings of the self-evolving data pipeline."""

    bootstrap_fraction: float = DEFAULT_BOOTSTRAP_FRACTION
    rounds: int = DEFAULT_ROUNDS
    k: int = DEFAULT_TOP_K
    held_out_tasks: int = 0
    workers: int = DEFAULT_WORKERS
    warm_start: bool = False
    train: TrainConfig = attrs.field(factory=TrainConfig)
    search_cap: int = DEFAULT_SEARCH_CAP

    def validate(self) -> None:
        """
        Check the pipeline invariants.

        :raises ContractError: on the first violated invariant
        """
        if not 0 < self.bootstrap_fraction <= 1:
            message = (
                f"bootstrap_fraction must be in (0, 1], got {self.bootstrap_fraction}"
            )
            raise ContractError(message)
        if self.rounds < 1 or self.k < 1 or self.workers < 1:
            message = "rounds, k and workers must all be >= 1"
            raise ContractError(message)
        if self.held_out_tasks < 0:
            message = f"held_out_tasks must be >= 0, got {self.held_out_tasks}"
            raise ContractError(message)
        self.train.validate()


@attrs.frozen
class RoundReport:
    """What one pipeline round searched, learned and scored."""

    round: int
    mode: str
    tasks_searched: int
    new_examples: int
    cumulative_examples: int
    mean_paths_evaluated: float
    sampled_fraction: float
    final_loss: float
    held_out_accuracy: float | None
    held_out_mean_tokens: float | None

    def to_record(self) -> dict[str, Any]:
        """Serialise the round."""
        return attrs.asdict(self)


@attrs.frozen(eq=False)
class PipelineResult:
    """The final router and everything the pipeline produced on the way."""

    model: RouterModel
    rounds: tuple[RoundReport, ...]
    examples: tuple[TrainingExample, ...]
    harvests: tuple[HarvestResult, ...]

    @property
    def sampled_fraction(self) -> float:
        """Share of the path space rolled out over all searched tasks."""
        evaluated = sum(harvest.paths_evaluated for harvest in self.harvests)
        space = sum(harvest.full_space for harvest in self.harvests)
        return evaluated / space if space else 0.0

    def to_record(self) -> dict[str, Any]:
        """Serialise the report (the model is saved separately)."""
        return {
            "rounds": [report.to_record() for report in self.rounds],
            "total_examples": len(self.examples),
            "sampled_fraction": self.sampled_fraction,
            "saving": 1.0 - self.sampled_fraction,
        }


def split_shards(
    scenarios: Sequence[Scenario], bootstrap_fraction: float, rounds: int
) -> list[list[Scenario]]:
    """
    Split tasks into the bootstrap shard and one shard per later round.

    The bootstrap shard is the first ceil(fraction * n) tasks; the rest are
    split evenly across the remaining rounds in dataset order.

    :raises ContractError: if a guided round would get no tasks
    """
    n_bootstrap = math.ceil(bootstrap_fraction * len(scenarios))
    shards = [list(scenarios[:n_bootstrap])]
    rest = list(scenarios[n_bootstrap:])
    if rounds > 1:
        if len(rest) < rounds - 1:
            message = (
                f"bootstrap_fraction {bootstrap_fraction} leaves {len(rest)} "
                f"tasks for {rounds - 1} guided rounds"
            )
            raise ContractError(message)
        bounds = np.linspace(0, len(rest), rounds, dtype=int)
        shards.extend(rest[int(lo) : int(hi)] for lo, hi in pairwise(bounds))
    elif rest:
        _LOGGER.warning("rounds = 1 leaves %s tasks unsearched", len(rest))
    return shards


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def held_out_metrics(
    model: RouterModel, scenarios: Sequence[Scenario]
) -> tuple[float | None, float | None]:
    """Task accuracy and mean tokens of the router on held-out tasks."""
    if not scenarios:
        return None, None
    paths = [
        run_inference(model, scenario, max_steps=scenario.n_agents)
        for scenario in scenarios
    ]
    accuracy = sum(path.is_valid for path in paths) / len(paths)
    return accuracy, float(np.mean([path.total_tokens for path in paths]))


def evolve_pipeline(
    scenarios: Sequence[Scenario],
    config: PipelineConfig,
    held_out: Sequence[Scenario] = (),
) -> PipelineResult:
    """
    Bootstrap a router from pruned search, then grow its data with guided search.

    Round 1 runs pruned search on the bootstrap shard and trains the first
    router. Each later round searches its shard with the current router,
    merges the new examples and retrains (from the initial weights unless
    warm_start) on everything collected so far.

    :param scenarios: Training tasks in dataset order
    :param config: Pipeline settings
    :param held_out: Tasks used only to score the router after each round
    :raises ContractError: for an empty task list or a bootstrap shard that
        yields no training example
    """
    config.validate()
    if not scenarios:
        message = "Cannot run the pipeline on an empty task list"
        raise ContractError(message)

    first = scenarios[0]
    initial = init_router(first, config.train)
    model = initial
    examples: list[TrainingExample] = []
    harvests: list[HarvestResult] = []
    reports: list[RoundReport] = []

    for round_index, shard in enumerate(
        split_shards(scenarios, config.bootstrap_fraction, config.rounds), start=1
    ):
        mode = "pruned" if round_index == 1 else "guided"
        search_fn = functools.partial(
            search,
            model=model,
            k=min(config.k, first.n_agents),
            search_cap=config.search_cap,
        )
        results = harvest_shard(shard, mode, search_fn, workers=config.workers)
        new_examples = [
            example
            for scenario, result in zip(shard, results, strict=True)
            for example in harvest_examples(
                scenario, result.valid_paths, config.train.w_alt
            )
        ]
        if round_index == 1 and not new_examples:
            message = "The bootstrap shard yielded no training examples"
            raise ContractError(message)
        examples.extend(new_examples)
        harvests.extend(results)

        trained = train(model if config.warm_start else initial, examples, config.train)
        model = trained.model
        accuracy, tokens = held_out_metrics(model, held_out)
        report = RoundReport(
            round=round_index,
            mode=mode,
            tasks_searched=len(shard),
            new_examples=len(new_examples),
            cumulative_examples=len(examples),
            mean_paths_evaluated=_mean([r.paths_evaluated for r in results]),
            sampled_fraction=_mean([r.sampled_fraction for r in results]),
            final_loss=trained.loss_history[-1],
            held_out_accuracy=accuracy,
            held_out_mean_tokens=tokens,
        )
        reports.append(report)
        _LOGGER.info(
            "Round %s (%s): %s tasks, %s examples, sampled %.3f, held-out acc %s",
            round_index,
            mode,
            report.tasks_searched,
            report.cumulative_examples,
            report.sampled_fraction,
            accuracy,
        )

    return PipelineResult(
        model=model,
        rounds=tuple(reports),
        examples=tuple(examples),
        harvests=tuple(harvests),
    )
