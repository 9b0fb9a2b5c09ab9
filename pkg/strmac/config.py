"""Config file schemas and loaders."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

import voluptuous as vol

from .const import (
    CONF_BATCH_SIZE,
    CONF_BOOTSTRAP_FRACTION,
    CONF_COST_SCALE,
    CONF_DECOY_WEIGHT,
    CONF_DISTRACTOR_FRACTION,
    CONF_EMBEDDING_DIM,
    CONF_EPOCHS,
    CONF_EVIDENCE_THRESHOLD,
    CONF_FEATURE_DIM,
    CONF_HELD_OUT_TASKS,
    CONF_HIDDEN_DIM,
    CONF_HISTORY_COST_RANGE,
    CONF_INCLUDE_STOP,
    CONF_LEARNING_RATE,
    CONF_MU,
    CONF_N_AGENTS,
    CONF_N_CLASSES,
    CONF_OPTIMIZER,
    CONF_QUERY_NOISE,
    CONF_ROUNDS,
    CONF_SEARCH_CAP,
    CONF_SEED,
    CONF_TEMPERATURE,
    CONF_TOKEN_COST_RANGE,
    CONF_TOP_K,
    CONF_TOP_N,
    CONF_TRAIN,
    CONF_W_ALT,
    CONF_WARM_START,
    CONF_WEIGHT_DECAY,
    CONF_WORKERS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BOOTSTRAP_FRACTION,
    DEFAULT_COST_SCALE,
    DEFAULT_DECOY_WEIGHT,
    DEFAULT_DISTRACTOR_FRACTION,
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_EVIDENCE_THRESHOLD,
    DEFAULT_FEATURE_DIM,
    DEFAULT_HIDDEN_DIM,
    DEFAULT_HISTORY_COST_RANGE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MU,
    DEFAULT_N_AGENTS,
    DEFAULT_N_CLASSES,
    DEFAULT_OPTIMIZER,
    DEFAULT_QUERY_NOISE,
    DEFAULT_ROUNDS,
    DEFAULT_SEARCH_CAP,
    DEFAULT_SEED,
    DEFAULT_TEMPERATURE,
    DEFAULT_TOKEN_COST_RANGE,
    DEFAULT_TOP_K,
    DEFAULT_TOP_N,
    DEFAULT_W_ALT,
    DEFAULT_WEIGHT_DECAY,
    DEFAULT_WORKERS,
    OPTIMIZERS,
)
from .evolve import PipelineConfig
from .metrics import EvalConfig
from .simenv import EnvConfig
from .store import read_json
from .train import TrainConfig

if TYPE_CHECKING:
    from pathlib import Path

positive_int = vol.All(vol.Coerce(int), vol.Range(min=1))
nonnegative_int = vol.All(vol.Coerce(int), vol.Range(min=0))
nonnegative_float = vol.All(vol.Coerce(float), vol.Range(min=0.0))
unit_interval = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))
seed_value = vol.All(vol.Coerce(int), vol.Range(min=0))


def _cost_range(value: Any) -> tuple[int, int]:
    """Validate a [low, high] pair of positive token costs."""
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        message = "expected a [low, high] pair"
        raise vol.Invalid(message)
    low, high = (vol.Coerce(int)(bound) for bound in value)
    if not 1 <= low <= high:
        message = f"expected 1 <= low <= high, got [{low}, {high}]"
        raise vol.Invalid(message)
    return (low, high)


ENV_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_N_AGENTS, default=DEFAULT_N_AGENTS): positive_int,
        vol.Required(CONF_FEATURE_DIM, default=DEFAULT_FEATURE_DIM): positive_int,
        vol.Required(CONF_N_CLASSES, default=DEFAULT_N_CLASSES): vol.All(
            vol.Coerce(int), vol.Range(min=2)
        ),
        vol.Required(
            CONF_EVIDENCE_THRESHOLD, default=DEFAULT_EVIDENCE_THRESHOLD
        ): vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0, min_included=False)),
        vol.Required(
            CONF_DISTRACTOR_FRACTION, default=DEFAULT_DISTRACTOR_FRACTION
        ): unit_interval,
        vol.Required(
            CONF_TOKEN_COST_RANGE, default=list(DEFAULT_TOKEN_COST_RANGE)
        ): _cost_range,
        vol.Required(
            CONF_HISTORY_COST_RANGE, default=list(DEFAULT_HISTORY_COST_RANGE)
        ): vol.All(
            vol.ExactSequence([nonnegative_int, nonnegative_int]),
            vol.Coerce(tuple),
        ),
        vol.Required(CONF_QUERY_NOISE, default=DEFAULT_QUERY_NOISE): nonnegative_float,
        vol.Required(
            CONF_DECOY_WEIGHT, default=DEFAULT_DECOY_WEIGHT
        ): nonnegative_float,
        vol.Required(CONF_SEARCH_CAP, default=DEFAULT_SEARCH_CAP): positive_int,
        vol.Required(CONF_SEED, default=DEFAULT_SEED): seed_value,
    }
)

TRAIN_SCHEMA = vol.Schema(
    {
        vol.Required(
            CONF_LEARNING_RATE, default=DEFAULT_LEARNING_RATE
        ): nonnegative_float,
        vol.Required(CONF_EPOCHS, default=DEFAULT_EPOCHS): positive_int,
        vol.Required(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): positive_int,
        vol.Required(
            CONF_WEIGHT_DECAY, default=DEFAULT_WEIGHT_DECAY
        ): nonnegative_float,
        vol.Required(CONF_SEED, default=DEFAULT_SEED): seed_value,
        vol.Required(CONF_W_ALT, default=DEFAULT_W_ALT): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Required(CONF_OPTIMIZER, default=DEFAULT_OPTIMIZER): vol.In(OPTIMIZERS),
        vol.Required(CONF_INCLUDE_STOP, default=True): vol.Boolean(),
        vol.Required(CONF_EMBEDDING_DIM, default=DEFAULT_EMBEDDING_DIM): positive_int,
        vol.Required(CONF_HIDDEN_DIM, default=DEFAULT_HIDDEN_DIM): positive_int,
        vol.Required(CONF_TEMPERATURE, default=DEFAULT_TEMPERATURE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
    }
)

PIPELINE_SCHEMA = vol.Schema(
    {
        vol.Required(
            CONF_BOOTSTRAP_FRACTION, default=DEFAULT_BOOTSTRAP_FRACTION
        ): vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0, min_included=False)),
        vol.Required(CONF_ROUNDS, default=DEFAULT_ROUNDS): positive_int,
        vol.Required(CONF_TOP_K, default=DEFAULT_TOP_K): positive_int,
        vol.Required(CONF_HELD_OUT_TASKS, default=0): nonnegative_int,
        vol.Required(CONF_WORKERS, default=DEFAULT_WORKERS): positive_int,
        vol.Required(CONF_WARM_START, default=False): vol.Boolean(),
        vol.Required(CONF_SEARCH_CAP, default=DEFAULT_SEARCH_CAP): positive_int,
        vol.Required(CONF_TRAIN, default=dict): TRAIN_SCHEMA,
    }
)

EVAL_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_MU, default=DEFAULT_MU): nonnegative_float,
        vol.Required(CONF_COST_SCALE, default=DEFAULT_COST_SCALE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Required(CONF_TOP_N, default=DEFAULT_TOP_N): positive_int,
        vol.Required(CONF_SEED, default=DEFAULT_SEED): seed_value,
        vol.Required(CONF_SEARCH_CAP, default=DEFAULT_SEARCH_CAP): positive_int,
    }
)


def read_config(path: Path | None) -> dict[str, Any]:
    """
    Read a config file, or an empty config when no path is given.

    :raises vol.Invalid: if the file does not hold a JSON object
    """
    if path is None:
        return {}
    data = read_json(path)
    if not isinstance(data, dict):
        message = f"Config file {path} must hold a JSON object"
        raise vol.Invalid(message)
    return data


def _with_seed(data: dict[str, Any], seed: int | None) -> dict[str, Any]:
    return data if seed is None else {**data, CONF_SEED: seed}


def env_config(data: dict[str, Any], seed: int | None = None) -> EnvConfig:
    """Validate and build an environment config; ``seed`` overrides the file."""
    config = EnvConfig(**ENV_SCHEMA(_with_seed(data, seed)))
    config.validate()
    return config


def train_config(data: dict[str, Any], seed: int | None = None) -> TrainConfig:
    """Validate and build a training config; ``seed`` overrides the file."""
    config = TrainConfig(**TRAIN_SCHEMA(_with_seed(data, seed)))
    config.validate()
    return config


def pipeline_config(data: dict[str, Any], seed: int | None = None) -> PipelineConfig:
    """Validate and build a pipeline config; ``seed`` overrides the train seed."""
    validated = PIPELINE_SCHEMA(data)
    train = train_config(validated.pop(CONF_TRAIN), seed)
    config = PipelineConfig(**validated, train=train)
    config.validate()
    return config


def eval_config(data: dict[str, Any], seed: int | None = None) -> EvalConfig:
    """Validate and build an evaluation config; ``seed`` overrides the file."""
    config = EvalConfig(**EVAL_SCHEMA(_with_seed(data, seed)))
    config.validate()
    return config
