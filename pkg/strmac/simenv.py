"""
Deterministic synthetic environment for fragmented-information tasks.

Each task's query is built around a lead agent's expertise; a decoy distractor
pulls the query towards itself but contributes negative evidence. An agent's
answer is the label once the running evidence of the executed agents clears the
threshold, and a hash-derived wrong class otherwise.
"""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, Any

import attrs
import numpy as np

from .const import (
    DEFAULT_DECOY_WEIGHT,
    DEFAULT_DISTRACTOR_FRACTION,
    DEFAULT_EVIDENCE_THRESHOLD,
    DEFAULT_FEATURE_DIM,
    DEFAULT_HISTORY_COST_RANGE,
    DEFAULT_N_AGENTS,
    DEFAULT_N_CLASSES,
    DEFAULT_QUERY_NOISE,
    DEFAULT_SEARCH_CAP,
    DEFAULT_SEED,
    DEFAULT_TOKEN_COST_RANGE,
)
from .core import (
    AgentProfile,
    ExecutionPath,
    StepRecord,
    SystemState,
    TaskInstance,
    derive_rng,
    make_path,
    profile_from_record,
    profile_to_record,
    stable_hash,
    task_from_record,
    task_to_record,
)
from .exceptions import ContractError

if TYPE_CHECKING:
    from collections.abc import Sequence

_LOGGER = logging.getLogger(__name__)

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF


def _cost_range(value: Any) -> tuple[int, int]:
    low, high = (int(bound) for bound in value)
    return (low, high)


def _seed(value: Any) -> int:
    return int(value) & _UINT64_MASK


@attrs.frozen
class EnvConfig:
    """Parameters of the synthetic environment; all randomness derives from seed."""

    n_agents: int = DEFAULT_N_AGENTS
    feature_dim: int = DEFAULT_FEATURE_DIM
    n_classes: int = DEFAULT_N_CLASSES
    evidence_threshold: float = DEFAULT_EVIDENCE_THRESHOLD
    distractor_fraction: float = DEFAULT_DISTRACTOR_FRACTION
    token_cost_range: tuple[int, int] = attrs.field(
        default=DEFAULT_TOKEN_COST_RANGE, converter=_cost_range
    )
    history_cost_range: tuple[int, int] = attrs.field(
        default=DEFAULT_HISTORY_COST_RANGE, converter=_cost_range
    )
    query_noise: float = DEFAULT_QUERY_NOISE
    decoy_weight: float = DEFAULT_DECOY_WEIGHT
    search_cap: int = DEFAULT_SEARCH_CAP
    seed: int = attrs.field(default=DEFAULT_SEED, converter=_seed)

    def validate(self) -> None:  # noqa: C901
        """
        Check the config invariants.

        :raises ContractError: on the first violated invariant
        """
        if self.n_agents < 1:
            message = f"n_agents must be >= 1, got {self.n_agents}"
            raise ContractError(message)
        if self.feature_dim < 1:
            message = f"feature_dim must be >= 1, got {self.feature_dim}"
            raise ContractError(message)
        if self.n_classes < 2:
            message = f"n_classes must be >= 2, got {self.n_classes}"
            raise ContractError(message)
        if not 0.0 < self.evidence_threshold <= 1.0:
            message = (
                f"evidence_threshold must be in (0, 1], got {self.evidence_threshold}"
            )
            raise ContractError(message)
        if not 0.0 <= self.distractor_fraction <= 1.0:
            message = "distractor_fraction must be in [0, 1]"
            raise ContractError(message)
        low, high = self.token_cost_range
        if not 1 <= low <= high:
            message = f"token_cost_range must satisfy 1 <= min <= max, got {low, high}"
            raise ContractError(message)
        low, high = self.history_cost_range
        if not 0 <= low <= high:
            message = (
                f"history_cost_range must satisfy 0 <= min <= max, got {low, high}"
            )
            raise ContractError(message)
        if self.query_noise < 0 or self.decoy_weight < 0:
            message = "query_noise and decoy_weight must be nonnegative"
            raise ContractError(message)
        if self.search_cap < 1:
            message = "search_cap must be >= 1"
            raise ContractError(message)

    def as_dict(self) -> dict[str, Any]:
        """Flat JSON form of the config."""
        record = attrs.asdict(self)
        record["token_cost_range"] = list(self.token_cost_range)
        record["history_cost_range"] = list(self.history_cost_range)
        return record


@attrs.frozen(eq=False)
class Scenario:
    """
    One task with everything needed to simulate it.

    The agent profiles, the environment seed (wrong-answer hashing) and the
    evidence threshold travel with the task so a rollout is a pure function of
    the scenario and an agent sequence.
    """

    task: TaskInstance
    profiles: tuple[AgentProfile, ...] = attrs.field(converter=tuple)
    seed: int = attrs.field(default=DEFAULT_SEED, converter=_seed)
    evidence_threshold: float = DEFAULT_EVIDENCE_THRESHOLD

    def __attrs_post_init__(self) -> None:
        """Check that the profiles cover exactly the task's agents."""
        ids = tuple(profile.agent_id for profile in self.profiles)
        if ids != self.task.agent_ids:
            message = (
                f"Profiles {ids} do not match agents {self.task.agent_ids} "
                f"of task {self.task.task_id}"
            )
            raise ContractError(message)

    @property
    def task_id(self) -> str:
        """Identifier of the wrapped task."""
        return self.task.task_id

    @property
    def n_agents(self) -> int:
        """Number of agents on the task."""
        return self.task.n_agents

    def profile(self, agent_id: int) -> AgentProfile:
        """Return the profile of one agent of this task."""
        return self.profiles[self.task.agent_index(agent_id)]

    def initial_state(self) -> SystemState:
        """The state before any agent has acted."""
        return SystemState(self.task)

    def to_record(self) -> dict[str, Any]:
        """Serialise as one dataset JSON Lines record."""
        return {
            **task_to_record(self.task),
            "seed": self.seed,
            "evidence_threshold": self.evidence_threshold,
            "agents": [profile_to_record(profile) for profile in self.profiles],
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> Scenario:
        """Deserialise a dataset record."""
        return cls(
            task=task_from_record(record),
            profiles=tuple(profile_from_record(agent) for agent in record["agents"]),
            seed=int(record["seed"]),
            evidence_threshold=float(record["evidence_threshold"]),
        )


@attrs.frozen
class SimOutcome:
    """What one simulated agent returned."""

    answer: int
    tokens_consumed: int


def _unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector)


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        vector = rng.standard_normal(dim)
        norm = float(np.linalg.norm(vector))
        if norm > 1e-6:
            return vector / norm


def _distractor_count(config: EnvConfig) -> int:
    return math.floor(config.distractor_fraction * config.n_agents + 0.5)


def _population(config: EnvConfig) -> list[tuple[np.ndarray, int, int]]:
    """Draw the expertise and token costs shared by every task of a dataset."""
    rng = derive_rng(config.seed, "population")
    low, high = config.token_cost_range
    hist_low, hist_high = config.history_cost_range
    return [
        (
            _random_unit(rng, config.feature_dim),
            int(rng.integers(low, high, endpoint=True)),
            int(rng.integers(hist_low, hist_high, endpoint=True)),
        )
        for _ in range(config.n_agents)
    ]


def generate_tasks(config: EnvConfig, n_tasks: int) -> list[Scenario]:
    """
    Generate a deterministic dataset of tasks with their agent profiles.

    :param config: Environment parameters
    :param n_tasks: Number of tasks to draw
    :return: One scenario per task, in task order
    :raises ContractError: for an invalid config or a nonpositive task count
    """
    config.validate()
    if n_tasks < 1:
        message = f"n_tasks must be >= 1, got {n_tasks}"
        raise ContractError(message)

    population = _population(config)
    agent_ids = tuple(range(config.n_agents))
    n_distractors = _distractor_count(config)
    width = max(5, len(str(n_tasks - 1)))

    scenarios: list[Scenario] = []
    for index in range(n_tasks):
        task_id = f"task-{index:0{width}d}"
        rng = derive_rng(config.seed, task_id, "task")
        label = int(rng.integers(config.n_classes))
        lead = int(rng.integers(config.n_agents))
        others = [agent for agent in agent_ids if agent != lead]
        order = [others[i] for i in rng.permutation(len(others))] + [lead]
        distractors = set(order[:n_distractors])

        query = population[lead][0].copy()
        if n_distractors and others:
            # The first drawn distractor is the decoy mixed into the query.
            query = query + config.decoy_weight * population[order[0]][0]
        query = query + config.query_noise * rng.standard_normal(config.feature_dim)
        if float(np.linalg.norm(query)) < 1e-9:
            query = population[lead][0].copy()

        task = TaskInstance(
            task_id=task_id,
            query_features=_unit(query),
            label=label,
            n_classes=config.n_classes,
            agent_ids=agent_ids,
        )
        profiles = tuple(
            AgentProfile(
                agent_id=agent,
                expertise_vector=population[agent][0],
                base_token_cost=population[agent][1],
                per_history_token_cost=population[agent][2],
                distractor_flag=agent in distractors,
            )
            for agent in agent_ids
        )
        scenarios.append(
            Scenario(
                task=task,
                profiles=profiles,
                seed=config.seed,
                evidence_threshold=config.evidence_threshold,
            )
        )

    _LOGGER.debug(
        "Generated %s tasks over %s agents (seed=%s)",
        n_tasks,
        config.n_agents,
        config.seed,
    )
    return scenarios


def relevance(profile: AgentProfile, task: TaskInstance) -> float:
    """Signed evidence an agent contributes: negative for distractors."""
    value = max(0.0, float(np.dot(profile.expertise_vector, task.query_features)))
    return -value if profile.distractor_flag else value


def wrong_answer(seed: int, task: TaskInstance, sequence: Sequence[int]) -> int:
    """Deterministic wrong class for an executed agent sequence."""
    wrong = [c for c in range(task.n_classes) if c != task.label]
    return wrong[stable_hash(seed, task.task_id, tuple(sequence)) % len(wrong)]


def run_agent(
    agent: AgentProfile, state: SystemState, scenario: Scenario
) -> SimOutcome:
    """
    Simulate one agent acting on the current system state.

    :param agent: The agent to run; it must not have acted yet
    :param state: Query plus history so far
    :param scenario: The task's profiles, seed and evidence threshold
    :raises ContractError: if the agent already acted or is not on the task
    """
    if agent.agent_id in state.executed:
        message = f"Agent {agent.agent_id} already acted on {state.task.task_id}"
        raise ContractError(message)
    state.task.agent_index(agent.agent_id)

    sequence = (*state.executed, agent.agent_id)
    evidence = sum(
        relevance(scenario.profile(agent_id), state.task)
        for agent_id in state.executed
    )
    evidence += relevance(agent, state.task)

    if evidence >= scenario.evidence_threshold:
        answer = state.task.label
    else:
        answer = wrong_answer(scenario.seed, state.task, sequence)

    return SimOutcome(
        answer=answer,
        tokens_consumed=agent.base_token_cost
        + agent.per_history_token_cost * len(state.history),
    )


def execute_step(scenario: Scenario, state: SystemState, agent_id: int) -> SystemState:
    """Run one agent and return the state with its step appended."""
    outcome = run_agent(scenario.profile(agent_id), state, scenario)
    return state.extend(
        StepRecord(
            agent_id=agent_id,
            answer=outcome.answer,
            tokens_consumed=outcome.tokens_consumed,
        )
    )


def rollout(scenario: Scenario, agent_sequence: Sequence[int]) -> ExecutionPath:
    """
    Execute an agent sequence step by step and score the resulting path.

    :raises ContractError: for an empty, repeating or off-roster sequence
    """
    if not agent_sequence:
        message = f"Empty agent sequence for task {scenario.task_id}"
        raise ContractError(message)
    if len(set(agent_sequence)) != len(agent_sequence):
        message = f"Agent sequence {list(agent_sequence)} repeats an agent"
        raise ContractError(message)

    state = scenario.initial_state()
    for agent_id in agent_sequence:
        state = execute_step(scenario, state, agent_id)
    return make_path(scenario.task, state.history)
