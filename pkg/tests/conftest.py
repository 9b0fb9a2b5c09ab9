"""Shared fixtures for the strmac test suite."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from strmac.core import AgentProfile, TaskInstance
from strmac.encode import EncoderParams, feature_dim
from strmac.route import RouterModel, build_router
from strmac.simenv import EnvConfig, Scenario, generate_tasks

if TYPE_CHECKING:
    from collections.abc import Sequence

# Every hand-built agent costs 100 tokens plus 10 per earlier step, so a path's
# total is easy to work out by hand: [a] = 100, [a, b] = 210, [a, b, c] = 330.
BASE_COST = 100
HISTORY_COST = 10


def unit(dim: int, index: int) -> np.ndarray:
    """Standard basis vector."""
    vector = np.zeros(dim)
    vector[index] = 1.0
    return vector


def make_scenario(
    query: Sequence[float],
    expertise: Sequence[Sequence[float]],
    *,
    label: int = 1,
    n_classes: int = 4,
    distractors: Sequence[int] = (),
    base_costs: Sequence[int] | None = None,
    threshold: float = 0.6,
    task_id: str = "task-00000",
    seed: int = 0,
) -> Scenario:
    """Build a scenario from explicit vectors; agent ids are 0..N-1."""
    n_agents = len(expertise)
    costs = base_costs or [BASE_COST] * n_agents
    task = TaskInstance(
        task_id=task_id,
        query_features=query,
        label=label,
        n_classes=n_classes,
        agent_ids=tuple(range(n_agents)),
    )
    profiles = [
        AgentProfile(
            agent_id=agent,
            expertise_vector=expertise[agent],
            base_token_cost=costs[agent],
            per_history_token_cost=HISTORY_COST,
            distractor_flag=agent in distractors,
        )
        for agent in range(n_agents)
    ]
    return Scenario(
        task=task, profiles=profiles, seed=seed, evidence_threshold=threshold
    )


def constant_router(
    task: TaskInstance,
    agent_embeddings: Sequence[Sequence[float]],
    stop_embedding: Sequence[float],
    z: Sequence[float],
    *,
    temperature: float = 1.0,
) -> RouterModel:
    """A router whose encoder ignores its input and always emits ``z``."""
    hidden = 4
    in_dim = feature_dim(task.feature_dim, task.n_agents, task.n_classes)
    out = len(z)
    return RouterModel(
        encoder=EncoderParams(
            w1=np.zeros((hidden, in_dim)),
            b1=np.zeros(hidden),
            w2=np.zeros((out, hidden)),
            b2=np.array(z, dtype=np.float64),
        ),
        agent_embeddings=np.array(agent_embeddings, dtype=np.float64),
        stop_embedding=np.array(stop_embedding, dtype=np.float64),
        agent_ids=task.agent_ids,
        temperature=temperature,
    )


@pytest.fixture
def solo_scenario() -> Scenario:
    """
    Three orthogonal agents; the query is agent 2's expertise.

    Agent 2 alone clears the threshold, agents 0 and 1 contribute nothing.
    """
    return make_scenario(unit(3, 2), [unit(3, 0), unit(3, 1), unit(3, 2)])


@pytest.fixture
def unsolvable_scenario() -> Scenario:
    """The only aligned agent is a distractor, so evidence never clears."""
    return make_scenario(
        unit(3, 0), [unit(3, 0), unit(3, 1), unit(3, 2)], distractors=(0,)
    )


@pytest.fixture
def env_config() -> EnvConfig:
    """The default benchmark environment with a fixed seed."""
    return EnvConfig(seed=7)


@pytest.fixture
def scenarios(env_config: EnvConfig) -> list[Scenario]:
    """A small generated dataset."""
    return generate_tasks(env_config, 24)


@pytest.fixture
def router(scenarios: list[Scenario]) -> RouterModel:
    """A freshly initialised router for the generated dataset."""
    first = scenarios[0]
    return build_router(first.profiles, first.task.n_classes, seed=3)
