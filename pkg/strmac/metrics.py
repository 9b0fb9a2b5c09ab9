"""
Metrics, baselines and path-distribution analysis.

Every method maps a scenario to one execution path; a report aggregates
accuracy (percent), mean tokens and the cost-aware score CAS.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from typing import TYPE_CHECKING, Any

import attrs
import matplotlib as mpl
import numpy as np
from slugify import slugify

from .const import (
    DEFAULT_COST_SCALE,
    DEFAULT_MU,
    DEFAULT_SEARCH_CAP,
    DEFAULT_SEED,
    DEFAULT_TOP_N,
)
from .core import ExecutionPath, derive_rng
from .evolve import exhaustive_search
from .exceptions import ContractError
from .route import RouterModel, run_inference
from .simenv import rollout

mpl.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from .simenv import Scenario

_LOGGER = logging.getLogger(__name__)

METHOD_KINDS = (
    "strmac",
    "random_chain",
    "fixed_chain",
    "single_agent",
    "exhaustive_oracle",
)


@attrs.frozen
class EvalConfig:
    """Metric constants and baseline settings."""

    mu: float = DEFAULT_MU
    c: float = DEFAULT_COST_SCALE
    top_n: int = DEFAULT_TOP_N
    seed: int = DEFAULT_SEED
    search_cap: int = DEFAULT_SEARCH_CAP

    def validate(self) -> None:
        """
        Check the config invariants.

        :raises ContractError: on the first violated invariant
        """
        if not self.c > 0 or self.mu < 0:
            message = f"Need c > 0 and mu >= 0, got c={self.c} mu={self.mu}"
            raise ContractError(message)
        if self.top_n < 1 or self.search_cap < 1:
            message = "top_n and search_cap must be >= 1"
            raise ContractError(message)


def cas(
    accuracy: float,
    mean_tokens: float,
    mu: float = DEFAULT_MU,
    c: float = DEFAULT_COST_SCALE,
) -> float:
    """
    Cost-aware score: accuracy * exp(-mu * mean_tokens / c).

    :param accuracy: Accuracy in percent
    :param mean_tokens: Mean tokens per task
    :raises ContractError: for c <= 0 or negative inputs
    """
    if not c > 0:
        message = f"Cost scale c must be positive, got {c}"
        raise ContractError(message)
    if accuracy < 0 or mean_tokens < 0 or mu < 0:
        message = "accuracy, mean_tokens and mu must be nonnegative"
        raise ContractError(message)
    return accuracy * math.exp(-mu * mean_tokens / c)


@attrs.frozen
class Method:
    """A routing method to evaluate."""

    kind: str
    order: tuple[int, ...] = ()
    agent: int | None = None
    seed: int = 0

    @property
    def label(self) -> str:
        """Method id as accepted by ``parse_method``."""
        if self.kind == "fixed_chain":
            return f"fixed_chain:{','.join(map(str, self.order))}"
        if self.kind == "single_agent":
            return f"single_agent:{self.agent}"
        return self.kind

    @property
    def slug(self) -> str:
        """File-name-safe form of the label."""
        return slugify(self.label)


def parse_method(text: str, seed: int = 0) -> Method:
    """
    Parse a method id such as ``strmac``, ``fixed_chain:0,2,1`` or ``single_agent:3``.

    :raises ContractError: for an unknown method id or a malformed argument
    """
    kind, _, argument = text.strip().partition(":")
    if kind not in METHOD_KINDS:
        message = f"Unknown method {text!r}; choose from {METHOD_KINDS}"
        raise ContractError(message)
    try:
        if kind == "fixed_chain":
            order = tuple(int(part) for part in argument.split(",") if part.strip())
            return Method(kind=kind, order=order)
        if kind == "single_agent":
            return Method(kind=kind, agent=int(argument))
    except ValueError as err:
        message = f"Malformed argument in method {text!r}"
        raise ContractError(message) from err
    if argument:
        message = f"Method {kind} takes no argument, got {argument!r}"
        raise ContractError(message)
    return Method(kind=kind, seed=seed)


def _random_chain(scenario: Scenario, seed: int) -> ExecutionPath:
    order = derive_rng(seed, scenario.task_id, "random_chain").permutation(
        len(scenario.task.agent_ids)
    )
    return rollout(scenario, [scenario.task.agent_ids[i] for i in order])


def _oracle(scenario: Scenario, search_cap: int) -> ExecutionPath:
    best = exhaustive_search(scenario, search_cap).best_path
    if best is None:
        # No correct path; the canonical minimum is the first agent alone.
        return rollout(scenario, [scenario.task.agent_ids[0]])
    return best


def run_method(
    method: Method,
    scenario: Scenario,
    model: RouterModel | None = None,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> ExecutionPath:
    """
    Produce the execution path a method takes on one task.

    :raises ContractError: for an unknown method, or strmac without a model
    """
    match method.kind:
        case "strmac":
            if model is None:
                message = "The strmac method needs a router model"
                raise ContractError(message)
            return run_inference(model, scenario, max_steps=scenario.n_agents)
        case "random_chain":
            return _random_chain(scenario, method.seed)
        case "fixed_chain":
            return rollout(scenario, method.order)
        case "single_agent" if method.agent is not None:
            return rollout(scenario, [method.agent])
        case "exhaustive_oracle":
            return _oracle(scenario, search_cap)
    message = f"Unknown method {method.kind!r}; choose from {METHOD_KINDS}"
    raise ContractError(message)


@attrs.frozen
class TaskRecord:
    """One task's outcome under a method."""

    task_id: str
    sequence: tuple[int, ...]
    prediction: int
    label: int
    tokens: int

    @property
    def correct(self) -> bool:
        """Whether the prediction matches the label."""
        return self.prediction == self.label

    def to_record(self) -> dict[str, Any]:
        """Serialise the record."""
        return {
            "task_id": self.task_id,
            "sequence": list(self.sequence),
            "prediction": self.prediction,
            "label": self.label,
            "correct": self.correct,
            "tokens": self.tokens,
        }


@attrs.frozen
class PathStat:
    """How often a sequence was chosen, and its accuracy in percent."""

    count: int
    accuracy: float


@attrs.frozen
class EvalReport:
    """Headline metrics and per-task records of one method on one dataset."""

    method: str
    accuracy: float
    mean_tokens: float
    cas: float
    records: tuple[TaskRecord, ...]
    path_distribution: dict[tuple[int, ...], PathStat]
    mu: float = DEFAULT_MU
    c: float = DEFAULT_COST_SCALE

    def to_record(self) -> dict[str, Any]:
        """Serialise the report; distribution keys are comma-joined sequences."""
        return {
            "method": self.method,
            "accuracy": self.accuracy,
            "mean_tokens": self.mean_tokens,
            "cas": self.cas,
            "mu": self.mu,
            "c": self.c,
            "tasks": [record.to_record() for record in self.records],
            "path_distribution": {
                ",".join(map(str, sequence)): attrs.asdict(stat)
                for sequence, stat in sorted(self.path_distribution.items())
            },
        }


def summarize(
    method: str,
    records: Sequence[TaskRecord],
    mu: float = DEFAULT_MU,
    c: float = DEFAULT_COST_SCALE,
) -> EvalReport:
    """Aggregate per-task records into a report."""
    accuracy = 100.0 * sum(record.correct for record in records) / len(records)
    mean_tokens = float(np.mean([record.tokens for record in records]))

    grouped: dict[tuple[int, ...], list[bool]] = defaultdict(list)
    for record in records:
        grouped[record.sequence].append(record.correct)
    distribution = {
        sequence: PathStat(count=len(hits), accuracy=100.0 * sum(hits) / len(hits))
        for sequence, hits in grouped.items()
    }
    return EvalReport(
        method=method,
        accuracy=accuracy,
        mean_tokens=mean_tokens,
        cas=cas(accuracy, mean_tokens, mu, c),
        records=tuple(records),
        path_distribution=distribution,
        mu=mu,
        c=c,
    )


def evaluate(  # noqa: PLR0913
    method: Method,
    scenarios: Sequence[Scenario],
    *,
    model: RouterModel | None = None,
    mu: float = DEFAULT_MU,
    c: float = DEFAULT_COST_SCALE,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> EvalReport:
    """
    Run every task through a method and report accuracy, tokens and CAS.

    :raises ContractError: for an empty task set or an unknown method
    """
    if not scenarios:
        message = "Cannot evaluate on an empty task set"
        raise ContractError(message)
    if method.kind not in METHOD_KINDS:
        message = f"Unknown method {method.kind!r}; choose from {METHOD_KINDS}"
        raise ContractError(message)

    records = []
    for scenario in scenarios:
        path = run_method(method, scenario, model, search_cap)
        records.append(
            TaskRecord(
                task_id=scenario.task_id,
                sequence=path.sequence,
                prediction=path.prediction,
                label=scenario.task.label,
                tokens=path.total_tokens,
            )
        )
    report = summarize(method.label, records, mu, c)
    _LOGGER.info(
        "%s: acc %.1f tokens %.1f CAS %.1f",
        report.method,
        report.accuracy,
        report.mean_tokens,
        report.cas,
    )
    return report


def top_paths(
    report: EvalReport, top_n: int
) -> list[tuple[tuple[int, ...], int, float]]:
    """
    The most frequently chosen sequences as (sequence, count, accuracy).

    Sorted by descending count, ties by sequence.

    :raises ContractError: if top_n < 1
    """
    if top_n < 1:
        message = f"top_n must be >= 1, got {top_n}"
        raise ContractError(message)
    ranked = sorted(
        report.path_distribution.items(), key=lambda item: (-item[1].count, item[0])
    )
    return [(sequence, stat.count, stat.accuracy) for sequence, stat in ranked[:top_n]]


def individual_agent_reports(
    scenarios: Sequence[Scenario],
    mu: float = DEFAULT_MU,
    c: float = DEFAULT_COST_SCALE,
) -> list[EvalReport]:
    """Run each agent alone on every task; one report per agent."""
    if not scenarios:
        message = "Cannot evaluate on an empty task set"
        raise ContractError(message)
    return [
        evaluate(Method(kind="single_agent", agent=agent), scenarios, mu=mu, c=c)
        for agent in scenarios[0].task.agent_ids
    ]


def render_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table with one row per method."""
    header = ("Method", "Acc", "Token", "CAS")
    rows = [
        (
            report.method,
            f"{report.accuracy:.1f}",
            f"{report.mean_tokens:.1f}",
            f"{report.cas:.1f}",
        )
        for report in reports
    ]
    widths = [
        max(len(row[column]) for row in (header, *rows))
        for column in range(len(header))
    ]

    def line(cells: Sequence[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = (
            cell.rjust(width)
            for cell, width in zip(cells[1:], widths[1:], strict=True)
        )
        return " | ".join((first, *rest))

    separator = "-+-".join("-" * width for width in widths)
    return "\n".join([line(header), separator, *(line(row) for row in rows)]) + "\n"


def render_top_paths(report: EvalReport, top_n: int) -> str:
    """Text listing of the top paths of a report."""
    lines = [f"Top {top_n} paths for {report.method}:"]
    for sequence, count, accuracy in top_paths(report, top_n):
        share = 100.0 * count / len(report.records)
        lines.append(
            f"  [{', '.join(map(str, sequence))}]  {count} tasks ({share:.1f}%), "
            f"acc {accuracy:.1f}"
        )
    return "\n".join(lines) + "\n"


def write_distribution_svg(report: EvalReport, path: Path, top_n: int = 10) -> Path:
    """
    Plot the path distribution: task counts as bars, accuracy as a line.

    The SVG is written without a timestamp and with a fixed hash salt so the
    bytes depend only on the report.
    """
    ranked = top_paths(report, top_n)
    labels = ["-".join(map(str, sequence)) for sequence, _, _ in ranked]
    counts = [count for _, count, _ in ranked]
    accuracies = [accuracy for _, _, accuracy in ranked]

    with plt.rc_context({"svg.hashsalt": "strmac", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(labels) + 2.0), 3.5))
        positions = np.arange(len(labels))
        ax.bar(positions, counts, color="tab:blue", alpha=0.7)
        ax.set_xticks(positions, labels, rotation=45, ha="right")
        ax.set_ylabel("Tasks")
        ax.set_title(report.method)

        acc_ax = ax.twinx()
        acc_ax.plot(positions, accuracies, color="tab:red", marker="o")
        acc_ax.set_ylim(0, 100)
        acc_ax.set_ylabel("Accuracy (%)")

        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
