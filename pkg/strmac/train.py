"""
Contrastive training of the router.

Loss: softmax cross-entropy over the cosine scores of every action (agents and
STOP), unmasked, scaled by the example weight. Gradients are derived by hand:
softmax -> scores -> unit state embedding -> normalisation Jacobian -> MLP.
The agent embeddings are frozen and get no gradient.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

import attrs
import numpy as np

from .const import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN_DIM,
    DEFAULT_LEARNING_RATE,
    DEFAULT_OPTIMIZER,
    DEFAULT_SEED,
    DEFAULT_TEMPERATURE,
    DEFAULT_W_ALT,
    DEFAULT_WEIGHT_DECAY,
    OPTIMIZERS,
    STOP,
)
from .core import (
    SystemState,
    best_path,
    derive_rng,
    step_from_record,
    step_to_record,
)
from .encode import EncoderParams, featurize_state, forward
from .exceptions import ContractError
from .route import Action, RouterModel, build_router, score_agents
from .simenv import execute_step

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping, Sequence

    from .core import ExecutionPath, StepRecord
    from .simenv import Scenario

_LOGGER = logging.getLogger(__name__)

BLOCKS = ("w1", "b1", "w2", "b2", "stop_embedding")
_DECAYED = ("w1", "w2")

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@attrs.frozen(eq=False)
class TrainingExample:
    """A state and the action the router should take there."""

    state: SystemState
    target: Action
    weight: float = 1.0

    def __attrs_post_init__(self) -> None:
        """Check that the target is a legal action in the state."""
        if not self.weight > 0:
            message = f"Example weight must be positive, got {self.weight}"
            raise ContractError(message)
        if self.target == STOP:
            if not self.state.history:
                message = "STOP cannot be the target of an empty-history state"
                raise ContractError(message)
            return
        if self.target in self.state.executed:
            message = f"Target agent {self.target} already acted in this state"
            raise ContractError(message)
        self.state.task.agent_index(int(self.target))

    def to_record(self) -> dict[str, Any]:
        """Serialise as one JSON Lines record."""
        return {
            "task_id": self.state.task.task_id,
            "history": [step_to_record(step) for step in self.state.history],
            "target": self.target,
            "weight": self.weight,
        }

    @classmethod
    def from_record(
        cls, record: dict[str, Any], scenarios: Mapping[str, Scenario]
    ) -> TrainingExample:
        """
        Deserialise an example, resolving its task from the dataset.

        :raises ContractError: if the task id is not in the dataset
        """
        task_id = str(record["task_id"])
        if task_id not in scenarios:
            message = f"Example refers to unknown task {task_id}"
            raise ContractError(message)
        target = record["target"]
        return cls(
            state=SystemState(
                scenarios[task_id].task,
                tuple(step_from_record(step) for step in record["history"]),
            ),
            target=STOP if target == STOP else int(target),
            weight=float(record["weight"]),
        )


@attrs.frozen
class TrainConfig:
    """Optimiser settings."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    seed: int = DEFAULT_SEED
    w_alt: float = DEFAULT_W_ALT
    optimizer: str = DEFAULT_OPTIMIZER
    include_stop: bool = True
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    temperature: float = DEFAULT_TEMPERATURE

    def validate(self) -> None:
        """
        Check the config invariants.

        :raises ContractError: on the first violated invariant
        """
        if self.learning_rate < 0 or self.weight_decay < 0:
            message = "learning_rate and weight_decay must be nonnegative"
            raise ContractError(message)
        if self.epochs < 1 or self.batch_size < 1:
            message = "epochs and batch_size must be >= 1"
            raise ContractError(message)
        if not self.w_alt > 0:
            message = f"w_alt must be positive, got {self.w_alt}"
            raise ContractError(message)
        if self.embedding_dim < 1 or self.hidden_dim < 1 or not self.temperature > 0:
            message = "embedding_dim and hidden_dim must be >= 1, temperature > 0"
            raise ContractError(message)
        if self.optimizer not in OPTIMIZERS:
            message = f"Unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}"
            raise ContractError(message)


@attrs.frozen(eq=False)
class RouterGradient:
    """Gradient of the loss with respect to every trainable block."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    stop_embedding: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        """Gradient blocks by name."""
        return {name: getattr(self, name) for name in BLOCKS}

    def norm(self) -> float:
        """Euclidean norm over all blocks."""
        return float(np.sqrt(sum(np.sum(g * g) for g in self.blocks().values())))


def model_blocks(model: RouterModel) -> dict[str, np.ndarray]:
    """Trainable parameter blocks of a model by name."""
    return {**model.encoder.blocks(), "stop_embedding": model.stop_embedding}


def with_blocks(model: RouterModel, blocks: Mapping[str, np.ndarray]) -> RouterModel:
    """Return a copy of ``model`` with the given trainable blocks."""
    encoder = EncoderParams(
        w1=blocks["w1"],
        b1=blocks["b1"],
        w2=blocks["w2"],
        b2=blocks["b2"],
        seed=model.encoder.seed,
    )
    return attrs.evolve(model, encoder=encoder, stop_embedding=blocks["stop_embedding"])


@attrs.frozen(eq=False)
class _Batch:
    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def take(self, index: np.ndarray) -> _Batch:
        return _Batch(self.features[index], self.targets[index], self.weights[index])


def _make_batch(
    model: RouterModel, examples: Sequence[TrainingExample], *, include_stop: bool
) -> _Batch:
    targets = []
    for example in examples:
        index = model.index_of(example.target)
        if index == model.n_agents and not include_stop:
            message = "STOP target requires include_stop"
            raise ContractError(message)
        targets.append(index)
    return _Batch(
        features=np.stack([featurize_state(example.state) for example in examples]),
        targets=np.array(targets, dtype=np.int64),
        weights=np.array([example.weight for example in examples], dtype=np.float64),
    )


def _actions(model: RouterModel, *, include_stop: bool) -> np.ndarray:
    return model.action_matrix() if include_stop else model.agent_embeddings


def _batch_loss(model: RouterModel, batch: _Batch, *, include_stop: bool) -> float:
    z = forward(model.encoder, batch.features).z
    logits = z @ _actions(model, include_stop=include_stop).T / model.temperature
    shift = logits.max(axis=1, keepdims=True)
    log_norm = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    target_logit = logits[np.arange(len(batch.targets)), batch.targets]
    return float(np.sum(batch.weights * (log_norm - target_logit)) / len(batch.targets))


def _batch_gradient(
    model: RouterModel, batch: _Batch, *, include_stop: bool
) -> tuple[float, RouterGradient]:
    size = len(batch.targets)
    trace = forward(model.encoder, batch.features)
    actions = _actions(model, include_stop=include_stop)
    logits = trace.z @ actions.T / model.temperature

    shift = logits.max(axis=1, keepdims=True)
    exp = np.exp(logits - shift)
    probabilities = exp / exp.sum(axis=1, keepdims=True)
    log_norm = shift[:, 0] + np.log(exp.sum(axis=1))
    rows = np.arange(size)
    losses = batch.weights * (log_norm - logits[rows, batch.targets])
    loss = float(np.sum(losses) / size)

    # dL/dscores
    delta = probabilities.copy()
    delta[rows, batch.targets] -= 1.0
    delta *= (batch.weights / size)[:, None] / model.temperature

    d_z = delta @ actions
    if include_stop:
        stop_unit = actions[-1]
        d_stop_unit = delta[:, -1] @ trace.z
        d_stop = (
            d_stop_unit - stop_unit * float(stop_unit @ d_stop_unit)
        ) / np.linalg.norm(model.stop_embedding)
    else:
        d_stop = np.zeros_like(model.stop_embedding)

    # Normalisation Jacobian (I - z z^T) / |u|
    d_u = (d_z - trace.z * np.sum(trace.z * d_z, axis=1, keepdims=True)) / trace.norm[
        :, None
    ]
    d_w2 = d_u.T @ trace.a
    d_b2 = d_u.sum(axis=0)
    d_h = (d_u @ model.encoder.w2) * (1.0 - trace.a * trace.a)
    d_w1 = d_h.T @ trace.x
    d_b1 = d_h.sum(axis=0)

    gradient = RouterGradient(
        w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, stop_embedding=d_stop
    )
    return loss, gradient


def contrastive_loss(
    model: RouterModel, example: TrainingExample, *, include_stop: bool = True
) -> float:
    """Weighted cross-entropy of the target over all action cosines."""
    batch = _make_batch(model, [example], include_stop=include_stop)
    return _batch_loss(model, batch, include_stop=include_stop)


def loss_gradient(
    model: RouterModel, example: TrainingExample, *, include_stop: bool = True
) -> RouterGradient:
    """Analytic gradient of ``contrastive_loss`` for one example."""
    batch = _make_batch(model, [example], include_stop=include_stop)
    return _batch_gradient(model, batch, include_stop=include_stop)[1]


def mean_loss(
    model: RouterModel,
    examples: Sequence[TrainingExample],
    *,
    include_stop: bool = True,
) -> float:
    """Mean weighted loss over a set of examples."""
    batch = _make_batch(model, examples, include_stop=include_stop)
    return _batch_loss(model, batch, include_stop=include_stop)


def mean_gradient(
    model: RouterModel,
    examples: Sequence[TrainingExample],
    *,
    include_stop: bool = True,
) -> RouterGradient:
    """Gradient of ``mean_loss``."""
    batch = _make_batch(model, examples, include_stop=include_stop)
    return _batch_gradient(model, batch, include_stop=include_stop)[1]


@attrs.frozen(eq=False)
class TrainResult:
    """A trained model and its per-epoch mean loss."""

    model: RouterModel
    loss_history: tuple[float, ...]


class _Adam:
    def __init__(self, blocks: Mapping[str, np.ndarray]) -> None:
        self._m = {name: np.zeros_like(value) for name, value in blocks.items()}
        self._v = {name: np.zeros_like(value) for name, value in blocks.items()}
        self._t = 0

    def direction(self, grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        self._t += 1
        steps = {}
        for name, grad in grads.items():
            self._m[name] = _ADAM_BETA1 * self._m[name] + (1 - _ADAM_BETA1) * grad
            self._v[name] = _ADAM_BETA2 * self._v[name] + (1 - _ADAM_BETA2) * grad**2
            m_hat = self._m[name] / (1 - _ADAM_BETA1**self._t)
            v_hat = self._v[name] / (1 - _ADAM_BETA2**self._t)
            steps[name] = m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        return steps


def train(
    model: RouterModel,
    examples: Sequence[TrainingExample],
    config: TrainConfig,
) -> TrainResult:
    """
    Minibatch gradient descent with weight decay on the encoder weight matrices.

    Shuffling is drawn from the config seed; the input model is not modified.

    :raises ContractError: for an empty example list or an invalid config
    """
    config.validate()
    if not examples:
        message = "Cannot train on an empty example list"
        raise ContractError(message)

    data = _make_batch(model, examples, include_stop=config.include_stop)
    params = {name: value.copy() for name, value in model_blocks(model).items()}
    adam = _Adam(params) if config.optimizer == "adam" else None
    rng = derive_rng(config.seed, "shuffle")
    n_examples = len(examples)
    history: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(n_examples)
        epoch_loss = 0.0
        for start in range(0, n_examples, config.batch_size):
            index = order[start : start + config.batch_size]
            current = with_blocks(model, params)
            loss, grad = _batch_gradient(
                current, data.take(index), include_stop=config.include_stop
            )
            epoch_loss += loss * len(index)

            grads = grad.blocks()
            for name in _DECAYED:
                grads[name] = grads[name] + config.weight_decay * params[name]
            steps = adam.direction(grads) if adam is not None else grads
            for name, step in steps.items():
                params[name] = params[name] - config.learning_rate * step

        history.append(epoch_loss / n_examples)
        _LOGGER.debug("Epoch %s mean loss %.6f", epoch + 1, history[-1])

    _LOGGER.info(
        "Trained on %s examples for %s epochs: loss %.4f -> %.4f",
        n_examples,
        config.epochs,
        history[0],
        history[-1],
    )
    return TrainResult(model=with_blocks(model, params), loss_history=tuple(history))


def routing_accuracy(model: RouterModel, examples: Sequence[TrainingExample]) -> float:
    """Fraction of examples whose target is the unmasked argmax action."""
    hits = sum(
        score_agents(model, example.state).chosen == example.target
        for example in examples
    )
    return hits / len(examples) if examples else 0.0


@attrs.frozen
class GradientCheckReport:
    """Relative error of the analytic gradient per parameter block."""

    errors: dict[str, float]
    step: float
    tolerance: float
    reliable_step: bool

    @property
    def passed(self) -> bool:
        """Whether every block is within tolerance."""
        return all(error < self.tolerance for error in self.errors.values())

    @property
    def failed_blocks(self) -> tuple[str, ...]:
        """Names of the blocks over tolerance."""
        return tuple(
            name for name, error in self.errors.items() if not error < self.tolerance
        )

    def to_record(self) -> dict[str, Any]:
        """Serialise the report."""
        return {
            "errors": self.errors,
            "step": self.step,
            "tolerance": self.tolerance,
            "reliable_step": self.reliable_step,
            "passed": self.passed,
            "failed_blocks": list(self.failed_blocks),
        }


_RELIABLE_STEP = 1e-3


def gradient_check(
    model: RouterModel,
    examples: Sequence[TrainingExample],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    *,
    gradient_fn: Callable[[RouterModel, Sequence[TrainingExample]], RouterGradient]
    | None = None,
) -> GradientCheckReport:
    """
    Compare the analytic gradient against central finite differences.

    The relative error of a block is |g - g_fd| / (|g_fd| + 1e-12). Steps above
    1e-3 are flagged unreliable but still produce a report.

    :raises ContractError: if step is not positive or there are no examples
    """
    if not step > 0:
        message = f"Finite-difference step must be positive, got {step}"
        raise ContractError(message)
    if not examples:
        message = "Gradient check needs at least one example"
        raise ContractError(message)
    if step > _RELIABLE_STEP:
        _LOGGER.warning("Finite-difference step %s is too large to be reliable", step)

    analytic = (gradient_fn or mean_gradient)(model, examples).blocks()
    batch = _make_batch(model, examples, include_stop=True)
    base = {name: value.copy() for name, value in model_blocks(model).items()}

    errors: dict[str, float] = {}
    for name in BLOCKS:
        numeric = np.zeros_like(base[name])
        for i in range(base[name].size):
            shifted = {key: value.copy() for key, value in base.items()}
            shifted[name].flat[i] = base[name].flat[i] + step
            upper = _batch_loss(with_blocks(model, shifted), batch, include_stop=True)
            shifted[name].flat[i] = base[name].flat[i] - step
            lower = _batch_loss(with_blocks(model, shifted), batch, include_stop=True)
            numeric.flat[i] = (upper - lower) / (2.0 * step)
        errors[name] = float(
            np.linalg.norm(analytic[name] - numeric) / (np.linalg.norm(numeric) + 1e-12)
        )

    return GradientCheckReport(
        errors=errors,
        step=step,
        tolerance=tolerance,
        reliable_step=step <= _RELIABLE_STEP,
    )


def harvest_examples(
    scenario: Scenario,
    valid_paths: Sequence[ExecutionPath],
    w_alt: float = DEFAULT_W_ALT,
) -> list[TrainingExample]:
    """
    Turn the valid paths of one task into training examples.

    Every distinct prefix of a valid path becomes a state whose target is the
    next action of the best valid path extending it (STOP when that path ends
    there). Prefixes of the overall best path get weight 1.0, all others w_alt.
    """
    if not valid_paths:
        return []
    overall = best_path(valid_paths)
    assert overall is not None
    on_best = {overall.sequence[:t] for t in range(len(overall.steps) + 1)}

    prefixes: dict[tuple[int, ...], tuple[StepRecord, ...]] = {}
    for path in valid_paths:
        for t in range(len(path.steps) + 1):
            prefixes.setdefault(path.sequence[:t], path.steps[:t])

    examples = []
    for prefix in sorted(prefixes, key=lambda p: (len(p), p)):
        depth = len(prefix)
        extending = [path for path in valid_paths if path.sequence[:depth] == prefix]
        target_path = best_path(extending)
        assert target_path is not None
        target: Action = (
            STOP if len(target_path.steps) == depth else target_path.sequence[depth]
        )
        examples.append(
            TrainingExample(
                state=SystemState(scenario.task, prefixes[prefix]),
                target=target,
                weight=1.0 if prefix in on_best else w_alt,
            )
        )
    return examples


def init_router(scenario: Scenario, config: TrainConfig) -> RouterModel:
    """Fresh router for the scenario's agent population, shaped by the config."""
    return build_router(
        scenario.profiles,
        scenario.task.n_classes,
        seed=config.seed,
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        temperature=config.temperature,
    )


def sample_examples(
    scenarios: Sequence[Scenario], n_examples: int, seed: int
) -> list[TrainingExample]:
    """
    Random reachable states paired with a random legal target.

    Used to exercise the loss and its gradient away from harvested data.
    """
    rng = derive_rng(seed, "sample-examples")
    examples = []
    for index in range(n_examples):
        scenario = scenarios[index % len(scenarios)]
        agents = scenario.task.agent_ids
        order = [agents[i] for i in rng.permutation(len(agents))]
        depth = int(rng.integers(len(agents)))
        state = scenario.initial_state()
        for agent in order[:depth]:
            state = execute_step(scenario, state, agent)
        choices: list[Action] = [*order[depth:], *([STOP] if depth else [])]
        examples.append(
            TrainingExample(
                state=state,
                target=choices[int(rng.integers(len(choices)))],
                weight=float(rng.uniform(0.5, 1.5)),
            )
        )
    return examples
