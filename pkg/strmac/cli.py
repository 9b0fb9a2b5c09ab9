"""Command-line entry point for strmac."""

from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import attrs
import click
import voluptuous as vol

from .config import env_config, eval_config, pipeline_config, read_config, train_config
from .const import REFERENCE_SAMPLED_FRACTION, SEARCH_MODES
from .core import count_paths, path_to_record
from .evolve import evolve_pipeline, search
from .exceptions import ContractError
from .metrics import (
    evaluate,
    individual_agent_reports,
    parse_method,
    render_table,
    render_top_paths,
    write_distribution_svg,
)
from .route import RouterModel, run_inference
from .search_queue import harvest_shard
from .simenv import generate_tasks
from .store import (
    load_dataset,
    read_json,
    read_jsonl,
    save_dataset,
    write_csv,
    write_json,
    write_jsonl,
)
from .train import (
    TrainingExample,
    gradient_check,
    harvest_examples,
    init_router,
    sample_examples,
    train,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .core import ExecutionPath
    from .simenv import Scenario

_LOGGER = logging.getLogger(__name__)

DEFAULT_N_TASKS = 300


class ValidationError(click.ClickException):
    """Bad input from the user; exits with status 2."""

    exit_code = 2


class StrmacGroup(click.Group):
    """Click group mapping library errors onto exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        """Run the subcommand; validation errors exit 2, anything else 1."""
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except (ContractError, vol.Invalid) as err:
            raise ValidationError(str(err)) from err
        except Exception as err:
            _LOGGER.exception("Internal error")
            raise click.ClickException(f"Internal error: {err}") from err


@attrs.frozen
class Settings:
    """Global options shared by every subcommand."""

    seed: int | None
    config: dict[str, Any]
    out: Path

    def path(self, name: str) -> Path:
        """Artifact path inside the output directory."""
        return self.out / name


pass_settings = click.make_pass_decorator(Settings)

dataset_option = click.option(
    "--dataset",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Dataset JSONL written by `gen`.",
)


@click.group(cls=StrmacGroup)
@click.option("--seed", type=int, default=None, help="Seed; overrides the config file.")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="JSON config file for the subcommand.",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("out"),
    show_default=True,
    help="Directory for written artifacts.",
)
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug.")
@click.pass_context
def main(
    ctx: click.Context,
    seed: int | None,
    config_path: Path | None,
    out: Path,
    verbose: int,
) -> None:
    """State-aware routing of tasks across a pool of agents."""
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = Settings(seed=seed, config=read_config(config_path), out=out)


@main.command()
@click.option(
    "--n-tasks", type=click.IntRange(min=1), default=DEFAULT_N_TASKS, show_default=True
)
@pass_settings
def gen(settings: Settings, n_tasks: int) -> None:
    """Generate a synthetic dataset."""
    config = env_config(settings.config, settings.seed)
    scenarios = generate_tasks(config, n_tasks)
    path = save_dataset(settings.path("dataset.jsonl"), scenarios)
    write_json(settings.path("env.json"), config.as_dict())
    _LOGGER.info("Generated %s tasks into %s", n_tasks, path)
    click.echo(f"Wrote {n_tasks} tasks to {path}")


@main.command(name="enumerate")
@click.argument("n_agents", type=int)
def enumerate_paths(n_agents: int) -> None:
    """Print the number of nonempty agent sequences over N agents."""
    click.echo(count_paths(n_agents))


def _load_model(path: Path) -> RouterModel:
    try:
        return RouterModel.from_record(read_json(path))
    except (KeyError, TypeError, ValueError) as err:
        message = f"Malformed model file {path}: {err!r}"
        raise ContractError(message) from err


def _examples_from(
    scenarios: Sequence[Scenario],
    valid_paths: Sequence[Sequence[ExecutionPath]],
    w_alt: float,
) -> list[TrainingExample]:
    return [
        example
        for scenario, paths in zip(scenarios, valid_paths, strict=True)
        for example in harvest_examples(scenario, paths, w_alt)
    ]


def _compression_summary(evaluated: int, space: int) -> str:
    fraction = evaluated / space if space else 0.0
    low, high = REFERENCE_SAMPLED_FRACTION
    return (
        f"sampled {fraction:.1%} of the path space (saving {1 - fraction:.1%}); "
        f"reference band {low:.1%}-{high:.1%}"
    )


@main.command(name="search")
@dataset_option
@click.option(
    "--mode", type=click.Choice(SEARCH_MODES), default="pruned", show_default=True
)
@click.option(
    "--model",
    "model_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Router model (guided mode).",
)
@click.option(
    "--k", type=click.IntRange(min=1), default=None, help="Top-k for guided mode."
)
@click.option("--workers", type=click.IntRange(min=1), default=None)
@pass_settings
def search_command(
    settings: Settings,
    dataset: Path,
    mode: str,
    model_path: Path | None,
    k: int | None,
    workers: int | None,
) -> None:
    """Search the path tree of every task and harvest training examples."""
    config = pipeline_config(settings.config, settings.seed)
    scenarios = load_dataset(dataset)
    model = _load_model(model_path) if model_path is not None else None
    if mode == "guided" and model is None:
        message = "guided search needs --model"
        raise ContractError(message)

    search_fn = functools.partial(
        search, model=model, k=k or config.k, search_cap=config.search_cap
    )

    results = harvest_shard(
        scenarios, mode, search_fn, workers=workers or config.workers
    )
    examples = _examples_from(
        scenarios, [result.valid_paths for result in results], config.train.w_alt
    )

    write_jsonl(
        settings.path(f"harvest-{mode}.jsonl"), (r.to_record() for r in results)
    )
    write_jsonl(settings.path("examples.jsonl"), (e.to_record() for e in examples))
    evaluated = sum(result.paths_evaluated for result in results)
    space = sum(result.full_space for result in results)
    stats = {
        "mode": mode,
        "tasks": len(results),
        "solvable_tasks": sum(result.best_path is not None for result in results),
        "paths_evaluated": evaluated,
        "mean_paths_evaluated": evaluated / len(results),
        "full_space": count_paths(scenarios[0].n_agents),
        "sampled_fraction": evaluated / space,
        "saving": 1 - evaluated / space,
        "examples": len(examples),
    }
    write_json(settings.path(f"search-{mode}-stats.json"), stats)
    click.echo(
        f"{mode}: {stats['mean_paths_evaluated']:.1f} of {stats['full_space']} paths "
        f"per task, {len(examples)} examples"
    )
    click.echo(_compression_summary(evaluated, space))


def _load_examples(path: Path, scenarios: Sequence[Scenario]) -> list[TrainingExample]:
    by_id = {scenario.task_id: scenario for scenario in scenarios}
    try:
        return [
            TrainingExample.from_record(record, by_id) for record in read_jsonl(path)
        ]
    except (KeyError, TypeError) as err:
        message = f"Malformed example record in {path}: {err!r}"
        raise ContractError(message) from err


@main.command(name="train")
@dataset_option
@click.option(
    "--examples",
    "examples_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Training examples JSONL written by `search`.",
)
@pass_settings
def train_command(settings: Settings, dataset: Path, examples_path: Path) -> None:
    """Train a router on harvested examples."""
    config = train_config(settings.config, settings.seed)
    scenarios = load_dataset(dataset)
    examples = _load_examples(examples_path, scenarios)
    result = train(init_router(scenarios[0], config), examples, config)

    write_json(settings.path("model.json"), result.model.to_record())
    write_csv(
        settings.path("loss.csv"),
        ("epoch", "mean_loss"),
        ((epoch, loss) for epoch, loss in enumerate(result.loss_history, start=1)),
    )
    click.echo(
        f"Trained on {len(examples)} examples: loss {result.loss_history[0]:.4f} -> "
        f"{result.loss_history[-1]:.4f}"
    )


@main.command()
@dataset_option
@pass_settings
def evolve(settings: Settings, dataset: Path) -> None:
    """Run the self-evolving pipeline: pruned bootstrap, then guided rounds."""
    config = pipeline_config(settings.config, settings.seed)
    scenarios = load_dataset(dataset)
    if config.held_out_tasks >= len(scenarios):
        message = (
            f"held_out_tasks={config.held_out_tasks} leaves no training tasks "
            f"out of {len(scenarios)}"
        )
        raise ContractError(message)
    split = len(scenarios) - config.held_out_tasks
    result = evolve_pipeline(scenarios[:split], config, held_out=scenarios[split:])

    write_json(settings.path("model.json"), result.model.to_record())
    write_json(settings.path("evolve-report.json"), result.to_record())
    write_jsonl(
        settings.path("examples.jsonl"), (e.to_record() for e in result.examples)
    )
    for report in result.rounds:
        accuracy = report.held_out_accuracy
        shown = "-" if accuracy is None else f"{accuracy:.3f}"
        click.echo(
            f"round {report.round} ({report.mode}): {report.tasks_searched} tasks, "
            f"{report.cumulative_examples} examples, "
            f"{report.mean_paths_evaluated:.1f} paths/task, held-out acc {shown}"
        )
    evaluated = sum(h.paths_evaluated for h in result.harvests)
    space = sum(h.full_space for h in result.harvests)
    click.echo(_compression_summary(evaluated, space))


@main.command()
@dataset_option
@click.option(
    "--model",
    "model_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--max-steps", type=click.IntRange(min=1), default=None)
@pass_settings
def infer(
    settings: Settings, dataset: Path, model_path: Path, max_steps: int | None
) -> None:
    """Route every task with a trained router."""
    model = _load_model(model_path)
    scenarios = load_dataset(dataset)
    trace: list[dict[str, Any]] = []
    paths = [
        run_inference(model, scenario, max_steps or scenario.n_agents, trace.append)
        for scenario in scenarios
    ]
    write_jsonl(settings.path("paths.jsonl"), (path_to_record(path) for path in paths))
    write_jsonl(settings.path("trace.jsonl"), trace)
    correct = sum(path.is_valid for path in paths)
    click.echo(f"{correct}/{len(paths)} tasks answered correctly")


@main.command(name="eval")
@dataset_option
@click.option(
    "--method",
    "methods",
    multiple=True,
    default=("strmac",),
    show_default=True,
    help="Method id; repeat to compare several.",
)
@click.option(
    "--model",
    "model_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
)
@click.option("--svg/--no-svg", default=False, help="Also plot each path distribution.")
@pass_settings
def eval_command(
    settings: Settings,
    dataset: Path,
    methods: tuple[str, ...],
    model_path: Path | None,
    svg: bool,  # noqa: FBT001
) -> None:
    """Evaluate methods and print an Acc / Token / CAS table."""
    config = eval_config(settings.config, settings.seed)
    parsed = [parse_method(text, config.seed) for text in methods]
    scenarios = load_dataset(dataset)
    model = _load_model(model_path) if model_path is not None else None

    reports = []
    for method in parsed:
        report = evaluate(
            method,
            scenarios,
            model=model,
            mu=config.mu,
            c=config.c,
            search_cap=config.search_cap,
        )
        reports.append(report)
        write_json(settings.path(f"report-{method.slug}.json"), report.to_record())
        if svg:
            write_distribution_svg(report, settings.path(f"paths-{method.slug}.svg"))

    table = render_table(reports)
    settings.out.mkdir(parents=True, exist_ok=True)
    settings.path("table.txt").write_text(table, encoding="utf-8")
    click.echo(table, nl=False)
    for report in reports:
        click.echo(render_top_paths(report, config.top_n), nl=False)


@main.command()
@dataset_option
@pass_settings
def agents(settings: Settings, dataset: Path) -> None:
    """Run each agent alone on every task and compare them."""
    config = eval_config(settings.config, settings.seed)
    reports = individual_agent_reports(load_dataset(dataset), mu=config.mu, c=config.c)
    write_json(settings.path("agents.json"), [report.to_record() for report in reports])
    click.echo(render_table(reports), nl=False)


@main.command()
@click.option("--n-examples", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--step", type=float, default=1e-5, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@pass_settings
def gradcheck(
    settings: Settings, n_examples: int, step: float, tolerance: float
) -> None:
    """Check the analytic gradient of a freshly seeded router."""
    config = train_config(settings.config, settings.seed)
    scenarios = generate_tasks(env_config({}, config.seed), n_examples)
    model = init_router(scenarios[0], config)
    report = gradient_check(
        model, sample_examples(scenarios, n_examples, config.seed), step, tolerance
    )
    write_json(settings.path("gradcheck.json"), report.to_record())
    for name, error in report.errors.items():
        click.echo(f"{name:<15} {error:.3e}")
    click.echo("PASS" if report.passed else f"FAIL: {', '.join(report.failed_blocks)}")
    if not report.passed:
        raise click.exceptions.Exit(1)

