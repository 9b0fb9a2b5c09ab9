"""
Domain types shared by every strmac module.

Holds the task/agent/path types, the closed-form path count, path scoring with
a dedicated negative-infinity sentinel, the canonical path order used to make
"the optimal path" unique, and keyed seeding helpers.
"""

from __future__ import annotations

import hashlib
import math
from enum import Enum
from typing import TYPE_CHECKING, Any, Final, Literal

import attrs
import numpy as np

from .const import NEG_INF_TOKEN, UNIT_NORM_TOLERANCE
from .exceptions import ContractError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence


class NegInf(Enum):
    """Sentinel for the score of a path that does not reach the label."""

    NEG_INF = NEG_INF_TOKEN

    def __repr__(self) -> str:
        """Render as the serialised token."""
        return NEG_INF_TOKEN


NEG_INF: Final = NegInf.NEG_INF

type Score = int | Literal[NegInf.NEG_INF]


def _readonly_vector(value: Any) -> np.ndarray:
    """Copy a sequence into an immutable float64 vector."""
    array = np.array(value, dtype=np.float64).reshape(-1)
    array.setflags(write=False)
    return array


def _check_unit_norm(_: object, attribute: attrs.Attribute, value: np.ndarray) -> None:
    if value.size < 1:
        message = f"{attribute.name} must have at least one entry"
        raise ContractError(message)
    norm = float(np.linalg.norm(value))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        message = f"{attribute.name} must have unit norm, got {norm!r}"
        raise ContractError(message)


def _check_positive(_: object, attribute: attrs.Attribute, value: int) -> None:
    if value < 1:
        message = f"{attribute.name} must be >= 1, got {value}"
        raise ContractError(message)


@attrs.frozen(eq=False)
class TaskInstance:
    """A task query split across agents, with its categorical ground truth."""

    task_id: str
    query_features: np.ndarray = attrs.field(
        converter=_readonly_vector, validator=_check_unit_norm
    )
    label: int
    n_classes: int
    agent_ids: tuple[int, ...] = attrs.field(converter=tuple)

    def __attrs_post_init__(self) -> None:
        """Validate the cross-field invariants."""
        if not self.agent_ids:
            message = f"Task {self.task_id} has no agents"
            raise ContractError(message)
        if len(set(self.agent_ids)) != len(self.agent_ids):
            message = f"Task {self.task_id} lists an agent id twice"
            raise ContractError(message)
        if self.n_classes < 2:
            message = f"Task {self.task_id} needs at least two classes"
            raise ContractError(message)
        if not 0 <= self.label < self.n_classes:
            message = f"Label {self.label} outside 0..{self.n_classes - 1}"
            raise ContractError(message)

    @property
    def n_agents(self) -> int:
        """Number of agents available for this task."""
        return len(self.agent_ids)

    @property
    def feature_dim(self) -> int:
        """Dimension of the query features."""
        return int(self.query_features.size)

    def agent_index(self, agent_id: int) -> int:
        """
        Return the position of an agent in this task's agent list.

        :raises ContractError: if the agent does not belong to the task
        """
        try:
            return self.agent_ids.index(agent_id)
        except ValueError as err:
            message = f"Agent {agent_id} is not available for task {self.task_id}"
            raise ContractError(message) from err


@attrs.frozen(eq=False)
class AgentProfile:
    """A simulated expert: its expertise direction and its token costs."""

    agent_id: int
    expertise_vector: np.ndarray = attrs.field(
        converter=_readonly_vector, validator=_check_unit_norm
    )
    base_token_cost: int = attrs.field(validator=_check_positive)
    per_history_token_cost: int = 0
    distractor_flag: bool = False

    def __attrs_post_init__(self) -> None:
        """Validate the history cost."""
        if self.per_history_token_cost < 0:
            message = "per_history_token_cost must be nonnegative"
            raise ContractError(message)


@attrs.frozen
class StepRecord:
    """One executed agent: who acted, what it answered and what it cost."""

    agent_id: int
    answer: int
    tokens_consumed: int = attrs.field(validator=_check_positive)


@attrs.frozen(eq=False)
class SystemState:
    """The task query together with the ordered history of agent steps."""

    task: TaskInstance
    history: tuple[StepRecord, ...] = attrs.field(default=(), converter=tuple)

    def __attrs_post_init__(self) -> None:
        """Validate that the history is repetition-free and on-roster."""
        executed = self.executed
        if len(set(executed)) != len(executed):
            message = f"History {executed} repeats an agent"
            raise ContractError(message)
        unknown = set(executed) - set(self.task.agent_ids)
        if unknown:
            message = f"History names agents {sorted(unknown)} outside the task"
            raise ContractError(message)

    @property
    def executed(self) -> tuple[int, ...]:
        """Agent ids in execution order."""
        return tuple(step.agent_id for step in self.history)

    @property
    def remaining(self) -> tuple[int, ...]:
        """Agent ids that have not acted yet, in task order."""
        done = set(self.executed)
        return tuple(agent for agent in self.task.agent_ids if agent not in done)

    def extend(self, step: StepRecord) -> SystemState:
        """Return the state after appending one step."""
        return SystemState(self.task, (*self.history, step))


def _check_steps(instance: ExecutionPath, _: attrs.Attribute, value: tuple) -> None:
    if not value:
        message = f"Path for task {instance.task_id} has no steps"
        raise ContractError(message)
    sequence = [step.agent_id for step in value]
    if len(set(sequence)) != len(sequence):
        message = f"Path {sequence} repeats an agent"
        raise ContractError(message)


@attrs.frozen
class ExecutionPath:
    """An executed, repetition-free agent sequence and its outcome."""

    task_id: str
    steps: tuple[StepRecord, ...] = attrs.field(converter=tuple, validator=_check_steps)
    prediction: int
    total_tokens: int
    score: Score

    def __attrs_post_init__(self) -> None:
        """Validate token additivity and the score/token agreement."""
        expected = sum(step.tokens_consumed for step in self.steps)
        if self.total_tokens != expected:
            message = f"total_tokens {self.total_tokens} != step sum {expected}"
            raise ContractError(message)
        if self.score is not NEG_INF and self.score != -self.total_tokens:
            message = f"Finite score {self.score} must equal -total_tokens"
            raise ContractError(message)

    @property
    def sequence(self) -> tuple[int, ...]:
        """Agent ids in execution order."""
        return tuple(step.agent_id for step in self.steps)

    @property
    def is_valid(self) -> bool:
        """Whether the path reached the label (finite score)."""
        return self.score is not NEG_INF


def count_paths(n_agents: int) -> int:
    """
    Count nonempty, repetition-free agent sequences over ``n_agents`` agents.

    Sum over K of N!/(N-K)!, in exact integer arithmetic.
    """
    if n_agents < 0:
        message = f"n_agents must be >= 0, got {n_agents}"
        raise ContractError(message)
    return sum(math.perm(n_agents, k) for k in range(1, n_agents + 1))


def score_path(path: ExecutionPath, label: int) -> Score:
    """Score a path: -total_tokens when its prediction is the label, else NEG_INF."""
    if path.prediction == label:
        return -path.total_tokens
    return NEG_INF


def make_path(task: TaskInstance, steps: Sequence[StepRecord]) -> ExecutionPath:
    """Assemble an ExecutionPath from executed steps and score it against the task."""
    steps = tuple(steps)
    if not steps:
        message = f"Path for task {task.task_id} has no steps"
        raise ContractError(message)
    unscored = ExecutionPath(
        task_id=task.task_id,
        steps=steps,
        prediction=steps[-1].answer,
        total_tokens=sum(step.tokens_consumed for step in steps),
        score=NEG_INF,
    )
    return attrs.evolve(unscored, score=score_path(unscored, task.label))


def path_sort_key(path: ExecutionPath) -> tuple[int, int, int, tuple[int, ...]]:
    """Ascending sort key for the canonical order: best path first."""
    if path.score is NEG_INF:
        return (1, 0, len(path.steps), path.sequence)
    return (0, -path.score, len(path.steps), path.sequence)


def canonical_path_order(a: ExecutionPath, b: ExecutionPath) -> int:
    """
    Compare two paths of the same task.

    Higher score first, then fewer steps, then the lexicographically smaller
    agent sequence. Returns -1 when ``a`` comes first, 1 when ``b`` does, 0 for
    paths with identical key.
    """
    key_a, key_b = path_sort_key(a), path_sort_key(b)
    return (key_a > key_b) - (key_a < key_b)


def best_path(paths: Iterable[ExecutionPath]) -> ExecutionPath | None:
    """Return the canonical-order maximum, or None for no paths."""
    return min(paths, key=path_sort_key, default=None)


def _canonical(part: object) -> str:
    if isinstance(part, (tuple, list)):
        return "(" + ",".join(_canonical(item) for item in part) + ")"
    if isinstance(part, np.integer):
        return str(int(part))
    return repr(part)


def stable_hash(*parts: object) -> int:
    """Hash a sequence of values to a 64-bit integer, identically on every platform."""
    digest = hashlib.blake2b(
        "\x1f".join(_canonical(part) for part in parts).encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def derive_rng(seed: int, *keys: object) -> np.random.Generator:
    """Return a generator on the sub-stream of ``seed`` named by ``keys``."""
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, *(stable_hash(key) for key in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def step_to_record(step: StepRecord) -> dict[str, int]:
    """Serialise a step."""
    return {
        "agent_id": step.agent_id,
        "answer": step.answer,
        "tokens": step.tokens_consumed,
    }


def step_from_record(record: dict[str, Any]) -> StepRecord:
    """Deserialise a step."""
    return StepRecord(
        agent_id=int(record["agent_id"]),
        answer=int(record["answer"]),
        tokens_consumed=int(record["tokens"]),
    )


def score_to_record(score: Score) -> int | str:
    """Serialise a score, mapping the sentinel to its token."""
    return NEG_INF_TOKEN if score is NEG_INF else score


def score_from_record(value: int | str) -> Score:
    """Deserialise a score."""
    if value == NEG_INF_TOKEN:
        return NEG_INF
    return int(value)


def path_to_record(path: ExecutionPath) -> dict[str, Any]:
    """Serialise a path as one JSON Lines record."""
    return {
        "task_id": path.task_id,
        "steps": [step_to_record(step) for step in path.steps],
        "prediction": path.prediction,
        "total_tokens": path.total_tokens,
        "score": score_to_record(path.score),
    }


def path_from_record(record: dict[str, Any]) -> ExecutionPath:
    """Deserialise a path record."""
    return ExecutionPath(
        task_id=str(record["task_id"]),
        steps=tuple(step_from_record(step) for step in record["steps"]),
        prediction=int(record["prediction"]),
        total_tokens=int(record["total_tokens"]),
        score=score_from_record(record["score"]),
    )


def task_to_record(task: TaskInstance) -> dict[str, Any]:
    """Serialise a task (without its agents)."""
    return {
        "task_id": task.task_id,
        "query_features": task.query_features.tolist(),
        "label": task.label,
        "n_classes": task.n_classes,
        "agent_ids": list(task.agent_ids),
    }


def task_from_record(record: dict[str, Any]) -> TaskInstance:
    """Deserialise a task."""
    return TaskInstance(
        task_id=str(record["task_id"]),
        query_features=record["query_features"],
        label=int(record["label"]),
        n_classes=int(record["n_classes"]),
        agent_ids=tuple(int(agent) for agent in record["agent_ids"]),
    )


def profile_to_record(profile: AgentProfile) -> dict[str, Any]:
    """Serialise an agent profile."""
    return {
        "agent_id": profile.agent_id,
        "expertise_vector": profile.expertise_vector.tolist(),
        "base_token_cost": profile.base_token_cost,
        "per_history_token_cost": profile.per_history_token_cost,
        "distractor_flag": profile.distractor_flag,
    }


def profile_from_record(record: dict[str, Any]) -> AgentProfile:
    """Deserialise an agent profile."""
    return AgentProfile(
        agent_id=int(record["agent_id"]),
        expertise_vector=record["expertise_vector"],
        base_token_cost=int(record["base_token_cost"]),
        per_history_token_cost=int(record["per_history_token_cost"]),
        distractor_flag=bool(record["distractor_flag"]),
    )
