"""Tests for the synthetic agent environment."""

from __future__ import annotations

from itertools import permutations

import attrs
import numpy as np
import pytest

from strmac.core import NEG_INF, StepRecord, SystemState
from strmac.exceptions import ContractError
from strmac.simenv import (
    EnvConfig,
    Scenario,
    execute_step,
    generate_tasks,
    relevance,
    rollout,
    run_agent,
    wrong_answer,
)
from strmac.store import dumps_document

from .conftest import BASE_COST, HISTORY_COST, make_scenario, unit


def test_generate_tasks_is_deterministic() -> None:
    """The same seed gives byte-identical datasets."""
    config = EnvConfig(seed=7)
    first = [s.to_record() for s in generate_tasks(config, 3)]
    second = [s.to_record() for s in generate_tasks(config, 3)]
    assert dumps_document(first) == dumps_document(second)


def test_generate_tasks_differs_by_seed() -> None:
    """Different seeds give different queries."""
    a = generate_tasks(EnvConfig(seed=1), 1)[0].task.query_features
    b = generate_tasks(EnvConfig(seed=2), 1)[0].task.query_features
    assert not np.allclose(a, b)


def test_generate_tasks_shape() -> None:
    """Every task carries all agents and unit-norm features."""
    config = EnvConfig()
    scenarios = generate_tasks(config, 100)

    assert len(scenarios) == 100
    assert len({s.task_id for s in scenarios}) == 100
    for scenario in scenarios:
        assert scenario.n_agents == config.n_agents
        assert len(scenario.profiles) == config.n_agents
        assert np.linalg.norm(scenario.task.query_features) == pytest.approx(1.0)
        assert 0 <= scenario.task.label < config.n_classes
        assert sum(p.distractor_flag for p in scenario.profiles) == 2


def test_population_is_shared_across_tasks() -> None:
    """Expertise and costs are the same agent population on every task."""
    first, second = generate_tasks(EnvConfig(seed=3), 2)
    for a, b in zip(first.profiles, second.profiles, strict=True):
        np.testing.assert_array_equal(a.expertise_vector, b.expertise_vector)
        assert a.base_token_cost == b.base_token_cost


def test_no_distractors_when_fraction_is_zero() -> None:
    """distractor_fraction = 0 flags nobody."""
    scenarios = generate_tasks(EnvConfig(distractor_fraction=0.0), 20)
    assert not any(p.distractor_flag for s in scenarios for p in s.profiles)


def test_token_costs_within_range() -> None:
    """Drawn costs respect the configured bounds."""
    config = EnvConfig(token_cost_range=(50, 60), history_cost_range=(1, 2))
    for profile in generate_tasks(config, 1)[0].profiles:
        assert 50 <= profile.base_token_cost <= 60
        assert 1 <= profile.per_history_token_cost <= 2


@pytest.mark.parametrize(
    "changes",
    [
        {"n_agents": 0},
        {"feature_dim": 0},
        {"n_classes": 1},
        {"evidence_threshold": 0.0},
        {"evidence_threshold": 1.5},
        {"distractor_fraction": -0.1},
        {"token_cost_range": (0, 10)},
        {"token_cost_range": (20, 10)},
        {"history_cost_range": (5, 1)},
        {"query_noise": -1.0},
        {"search_cap": 0},
    ],
)
def test_invalid_config_rejected(changes: dict) -> None:
    """Each broken invariant is reported as a contract error."""
    with pytest.raises(ContractError):
        generate_tasks(attrs.evolve(EnvConfig(), **changes), 1)


def test_nonpositive_task_count_rejected() -> None:
    """At least one task must be requested."""
    with pytest.raises(ContractError):
        generate_tasks(EnvConfig(), 0)


def test_aligned_agent_answers_label() -> None:
    """An agent whose expertise equals the query clears any threshold <= 1."""
    scenario = make_scenario(unit(3, 0), [unit(3, 0)], threshold=1.0)
    outcome = run_agent(scenario.profiles[0], scenario.initial_state(), scenario)

    assert outcome.answer == scenario.task.label
    assert outcome.tokens_consumed == BASE_COST


def test_orthogonal_agent_answers_wrong() -> None:
    """Zero evidence gives a deterministic wrong class."""
    scenario = make_scenario(unit(3, 0), [unit(3, 1)])
    first = run_agent(scenario.profiles[0], scenario.initial_state(), scenario)
    again = run_agent(scenario.profiles[0], scenario.initial_state(), scenario)

    assert first.answer != scenario.task.label
    assert first == again
    assert first.answer == wrong_answer(scenario.seed, scenario.task, (0,))


def test_distractor_relevance_is_negative(unsolvable_scenario: Scenario) -> None:
    """A distractor aligned with the query pulls the evidence down."""
    profile = unsolvable_scenario.profiles[0]
    assert relevance(profile, unsolvable_scenario.task) == pytest.approx(-1.0)


def test_history_raises_token_cost(solo_scenario: Scenario) -> None:
    """Later agents pay for the history they read."""
    state = execute_step(solo_scenario, solo_scenario.initial_state(), 0)
    outcome = run_agent(solo_scenario.profiles[1], state, solo_scenario)
    assert outcome.tokens_consumed == BASE_COST + HISTORY_COST


def test_run_agent_rejects_repeat(solo_scenario: Scenario) -> None:
    """An agent cannot act twice on one task."""
    state = execute_step(solo_scenario, solo_scenario.initial_state(), 0)
    with pytest.raises(ContractError):
        run_agent(solo_scenario.profiles[0], state, solo_scenario)


def test_evidence_accumulates(solo_scenario: Scenario) -> None:
    """A later agent answers correctly once the running evidence clears."""
    path = rollout(solo_scenario, [0, 2])

    assert path.steps[0].answer != solo_scenario.task.label
    assert path.prediction == solo_scenario.task.label
    assert path.total_tokens == 2 * BASE_COST + HISTORY_COST
    assert path.score == -path.total_tokens


def test_rollout_single_aligned_agent(solo_scenario: Scenario) -> None:
    """The aligned agent alone gives a finite length-1 path."""
    path = rollout(solo_scenario, [2])
    assert path.is_valid
    assert path.sequence == (2,)


def test_rollout_only_distractors() -> None:
    """Nothing but distractors never reaches the label."""
    scenario = make_scenario(
        unit(2, 0), [unit(2, 0), unit(2, 1)], distractors=(0, 1)
    )
    assert rollout(scenario, [0, 1]).score is NEG_INF


@pytest.mark.parametrize("sequence", [[], [0, 0], [5]])
def test_rollout_rejects_bad_sequences(solo_scenario: Scenario, sequence: list) -> None:
    """Empty, repeating and off-roster sequences are rejected."""
    with pytest.raises(ContractError):
        rollout(solo_scenario, sequence)


def test_scenario_record_round_trip(scenarios: list[Scenario]) -> None:
    """A scenario survives serialisation with identical rollouts."""
    scenario = scenarios[0]
    restored = Scenario.from_record(scenario.to_record())

    assert restored.to_record() == scenario.to_record()
    assert rollout(restored, [0, 1, 2]) == rollout(scenario, [0, 1, 2])


def test_scenario_profiles_must_match_task(solo_scenario: Scenario) -> None:
    """Profiles have to cover exactly the task's agents."""
    with pytest.raises(ContractError):
        Scenario(task=solo_scenario.task, profiles=solo_scenario.profiles[:2])


def test_state_history_is_appended(solo_scenario: Scenario) -> None:
    """execute_step appends one step and leaves the input state untouched."""
    state = SystemState(solo_scenario.task)
    after = execute_step(solo_scenario, state, 1)

    assert state.history == ()
    assert after.executed == (1,)
    assert isinstance(after.history[0], StepRecord)


@pytest.mark.parametrize("n_agents", [2, 3, 4, 5])
def test_every_sequence_grows_evidence_and_tokens(n_agents: int) -> None:
    """Helpful agents keep a solved prefix solved, and each step costs tokens."""
    config = EnvConfig(seed=11, n_agents=n_agents, distractor_fraction=0.4)
    for scenario in generate_tasks(config, 4):
        task = scenario.task
        paths = {
            sequence: rollout(scenario, sequence)
            for length in range(1, n_agents + 1)
            for sequence in permutations(task.agent_ids, length)
        }

        for sequence, path in paths.items():
            evidence = np.cumsum(
                [relevance(scenario.profile(agent), task) for agent in sequence]
            )
            for i in range(1, len(sequence)):
                prefix = paths[sequence[:i]]
                assert path.total_tokens > prefix.total_tokens
                if scenario.profile(sequence[i]).distractor_flag:
                    continue
                assert evidence[i] >= evidence[i - 1]
                if prefix.is_valid and all(
                    not scenario.profile(agent).distractor_flag
                    for agent in sequence[i:]
                ):
                    assert path.is_valid
