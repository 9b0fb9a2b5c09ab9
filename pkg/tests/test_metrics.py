"""Tests for CAS, the baselines and path-distribution reporting."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from strmac.exceptions import ContractError
from strmac.metrics import (
    EvalConfig,
    Method,
    TaskRecord,
    cas,
    evaluate,
    individual_agent_reports,
    parse_method,
    render_table,
    render_top_paths,
    summarize,
    top_paths,
    write_distribution_svg,
)
from strmac.simenv import rollout

from .conftest import constant_router, make_scenario, unit

if TYPE_CHECKING:
    from pathlib import Path

    from strmac.route import RouterModel
    from strmac.simenv import Scenario


@pytest.mark.parametrize(
    ("accuracy", "tokens", "expected"),
    [
        (64.0, 794.5, 59.11),
        (85.2, 338.0, 82.37),
        (50.0, 0.0, 50.0),
        (0.0, 1234.0, 0.0),
    ],
)
def test_cas_values(accuracy: float, tokens: float, expected: float) -> None:
    """Reported table rows are reproduced within rounding."""
    assert cas(accuracy, tokens) == pytest.approx(expected, abs=0.05)


def test_cas_penalises_tokens() -> None:
    """More tokens at equal accuracy score lower; mu = 0 ignores cost."""
    assert cas(80.0, 100.0) > cas(80.0, 900.0)
    assert cas(80.0, 900.0, mu=0.0) == 80.0


@pytest.mark.parametrize(
    ("accuracy", "tokens", "c"),
    [(50.0, 10.0, 0.0), (-1.0, 10.0, 1000.0), (50.0, -5.0, 1000.0)],
)
def test_cas_rejects_bad_input(accuracy: float, tokens: float, c: float) -> None:
    """c must be positive and the inputs nonnegative."""
    with pytest.raises(ContractError):
        cas(accuracy, tokens, c=c)


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("strmac", Method(kind="strmac")),
        ("random_chain", Method(kind="random_chain", seed=9)),
        ("fixed_chain:2,0,1", Method(kind="fixed_chain", order=(2, 0, 1))),
        ("single_agent:3", Method(kind="single_agent", agent=3)),
        ("exhaustive_oracle", Method(kind="exhaustive_oracle", seed=9)),
    ],
)
def test_parse_method(text: str, expected: Method) -> None:
    """Method ids parse into their kind and argument."""
    parsed = parse_method(text, seed=9)
    assert (parsed.kind, parsed.order, parsed.agent) == (
        expected.kind,
        expected.order,
        expected.agent,
    )
    assert parsed.label == text


@pytest.mark.parametrize(
    "text", ["beam", "single_agent:x", "strmac:1", "fixed_chain:a,b"]
)
def test_parse_method_rejects(text: str) -> None:
    """Unknown ids and malformed arguments are refused."""
    with pytest.raises(ContractError):
        parse_method(text)


def test_method_slug() -> None:
    """Slugs are safe for file names."""
    assert Method(kind="fixed_chain", order=(0, 2)).slug == "fixed-chain-0-2"


def test_fixed_chain_and_single_agent(solo_scenario: Scenario) -> None:
    """Fixed orders and single agents roll out exactly what they name."""
    chain = evaluate(Method(kind="fixed_chain", order=(0, 2)), [solo_scenario])
    single = evaluate(Method(kind="single_agent", agent=2), [solo_scenario])

    assert chain.records[0].sequence == (0, 2)
    assert chain.accuracy == 100.0
    assert chain.mean_tokens == 210.0
    assert single.records[0].sequence == (2,)
    assert single.mean_tokens == 100.0


def test_random_chain_visits_every_agent(scenarios: list[Scenario]) -> None:
    """Each task gets a seeded full permutation."""
    report = evaluate(Method(kind="random_chain", seed=4), scenarios)
    again = evaluate(Method(kind="random_chain", seed=4), scenarios)

    assert all(sorted(record.sequence) == [0, 1, 2, 3, 4] for record in report.records)
    assert report.to_record() == again.to_record()


def test_oracle_dominates_router(
    scenarios: list[Scenario], router: RouterModel
) -> None:
    """No method beats the exhaustive oracle on accuracy."""
    oracle = evaluate(Method(kind="exhaustive_oracle"), scenarios)
    routed = evaluate(Method(kind="strmac"), scenarios, model=router)
    assert oracle.accuracy >= routed.accuracy


def test_oracle_on_unsolvable_task(unsolvable_scenario: Scenario) -> None:
    """Without a correct path the oracle falls back to the first agent alone."""
    report = evaluate(Method(kind="exhaustive_oracle"), [unsolvable_scenario])
    assert report.records[0].sequence == (0,)
    assert report.accuracy == 0.0


def test_strmac_method_uses_the_router(solo_scenario: Scenario) -> None:
    """The router's path is the method's path; a model is required."""
    model = constant_router(
        solo_scenario.task, [unit(4, i) for i in range(3)], unit(4, 3), unit(4, 3)
    )
    report = evaluate(Method(kind="strmac"), [solo_scenario], model=model)

    assert report.records[0].sequence == (0,)
    with pytest.raises(ContractError):
        evaluate(Method(kind="strmac"), [solo_scenario])


def test_evaluate_rejects_empty_dataset() -> None:
    """There is nothing to average over no tasks."""
    with pytest.raises(ContractError):
        evaluate(Method(kind="random_chain"), [])


def record(
    task: str, sequence: tuple[int, ...], *, correct: bool, tokens: int = 10
) -> TaskRecord:
    """A task record with label 1."""
    return TaskRecord(task, sequence, 1 if correct else 0, 1, tokens)


def test_summarize_and_top_paths() -> None:
    """Counts rank paths; ties fall back to the sequence."""
    report = summarize(
        "demo",
        [
            record("t0", (2,), correct=True),
            record("t1", (2,), correct=True),
            record("t2", (2,), correct=False),
            record("t3", (1, 0), correct=True),
            record("t4", (0,), correct=False),
        ],
    )

    assert report.accuracy == pytest.approx(60.0)
    assert report.mean_tokens == 10.0
    assert top_paths(report, 2) == [((2,), 3, pytest.approx(200 / 3)), ((0,), 1, 0.0)]
    assert len(top_paths(report, 10)) == 3
    with pytest.raises(ContractError):
        top_paths(report, 0)


def test_dominant_agent_is_the_top_path() -> None:
    """When one agent solves most tasks alone, the oracle's top path is that agent."""
    dominant = [
        make_scenario(
            unit(3, 1), [unit(3, 0), unit(3, 1), unit(3, 2)], task_id=f"task-{i:05d}"
        )
        for i in range(9)
    ]
    other = make_scenario(
        unit(3, 2), [unit(3, 0), unit(3, 1), unit(3, 2)], task_id="task-00009"
    )
    report = evaluate(Method(kind="exhaustive_oracle"), [*dominant, other])

    assert top_paths(report, 1) == [((1,), 9, 100.0)]


def test_report_record_keys(solo_scenario: Scenario) -> None:
    """Distribution keys are comma-joined sequences."""
    report = evaluate(Method(kind="fixed_chain", order=(1, 2)), [solo_scenario])
    document = report.to_record()

    assert document["method"] == "fixed_chain:1,2"
    assert document["path_distribution"] == {"1,2": {"count": 1, "accuracy": 100.0}}
    assert document["tasks"][0]["correct"] is True


def test_individual_agent_reports(solo_scenario: Scenario) -> None:
    """One report per agent; only the aligned agent answers correctly."""
    reports = individual_agent_reports([solo_scenario])
    assert [report.method for report in reports] == [
        "single_agent:0",
        "single_agent:1",
        "single_agent:2",
    ]
    assert [report.accuracy for report in reports] == [0.0, 0.0, 100.0]


def test_render_table() -> None:
    """Columns are aligned under a header and separator."""
    reports = [
        summarize("strmac", [record("t0", (2,), correct=True, tokens=338)]),
        summarize("random_chain", [record("t0", (0, 1), correct=False, tokens=794)]),
    ]
    lines = render_table(reports).splitlines()

    assert lines[0].split(" | ")[0].strip() == "Method"
    assert set(lines[1]) <= {"-", "+"}
    assert len({len(line) for line in lines}) == 1
    assert lines[2].startswith("strmac")
    assert lines[3].split("|")[1].strip() == "0.0"


def test_render_top_paths() -> None:
    """Top paths list their share of tasks and accuracy."""
    report = summarize("demo", [record("t0", (2, 1), correct=True)])
    assert "[2, 1]  1 tasks (100.0%), acc 100.0" in render_top_paths(report, 3)


def test_distribution_svg_is_reproducible(tmp_path: Path) -> None:
    """The same report renders to the same SVG bytes."""
    report = summarize(
        "demo",
        [record("t0", (2,), correct=True), record("t1", (0, 1), correct=False)],
    )
    first = write_distribution_svg(report, tmp_path / "a" / "paths.svg")
    second = write_distribution_svg(report, tmp_path / "b" / "paths.svg")

    assert first.read_bytes().startswith(b"<?xml")
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize(
    "config",
    [
        EvalConfig(c=0.0),
        EvalConfig(mu=-0.1),
        EvalConfig(top_n=0),
        EvalConfig(search_cap=0),
    ],
)
def test_eval_config_validation(config: EvalConfig) -> None:
    """Broken metric settings are contract errors."""
    with pytest.raises(ContractError):
        config.validate()


@pytest.mark.parametrize(
    "text",
    [
        "strmac",
        "random_chain",
        "fixed_chain:3,1",
        "single_agent:2",
        "exhaustive_oracle",
    ],
)
def test_headline_metrics_follow_from_records(
    scenarios: list[Scenario], router: RouterModel, text: str
) -> None:
    """Accuracy, mean tokens and CAS can be rebuilt from the per-task records."""
    report = evaluate(parse_method(text, seed=6), scenarios, model=router)
    by_id = {scenario.task_id: scenario for scenario in scenarios}

    assert [record.task_id for record in report.records] == list(by_id)
    for record in report.records:
        scenario = by_id[record.task_id]
        path = rollout(scenario, record.sequence)
        assert record.prediction == path.prediction
        assert record.tokens == path.total_tokens
        assert record.label == scenario.task.label

    correct = [record.prediction == record.label for record in report.records]
    tokens = [record.tokens for record in report.records]
    assert report.accuracy == pytest.approx(100.0 * np.mean(correct))
    assert report.mean_tokens == pytest.approx(np.mean(tokens))
    assert report.cas == pytest.approx(
        cas(report.accuracy, report.mean_tokens, report.mu, report.c)
    )
    assert sum(stat.count for stat in report.path_distribution.values()) == len(tokens)
