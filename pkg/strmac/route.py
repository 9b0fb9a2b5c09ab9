"""
Routing decisions and the inference loop.

The router scores every agent (and a learned STOP pseudo-action) by the cosine
between the encoded state and the action's embedding, masks agents that already
acted, and picks the most probable action.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any, Literal

import attrs
import numpy as np

from .const import (
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_HIDDEN_DIM,
    DEFAULT_TEMPERATURE,
    STOP,
    UNIT_NORM_TOLERANCE,
)
from .core import ExecutionPath, SystemState, derive_rng, make_path
from .encode import (
    EncoderParams,
    embed_agents,
    encode,
    feature_dim,
    featurize_state,
    init_encoder,
)
from .exceptions import ContractError, NoActionError
from .simenv import Scenario, execute_step

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .core import AgentProfile

_LOGGER = logging.getLogger(__name__)

type Action = int | Literal["STOP"]


@attrs.frozen(eq=False)
class RouterModel:
    """Trainable encoder, frozen agent embeddings and a trainable STOP embedding."""

    encoder: EncoderParams
    agent_embeddings: np.ndarray
    stop_embedding: np.ndarray
    agent_ids: tuple[int, ...] = attrs.field(converter=tuple)
    temperature: float = DEFAULT_TEMPERATURE
    embedding_seed: int = 0

    def __attrs_post_init__(self) -> None:
        """Validate embedding shapes, unit rows and the temperature."""
        n_agents, d = self.agent_embeddings.shape
        if n_agents != len(self.agent_ids):
            message = f"{n_agents} embeddings for {len(self.agent_ids)} agents"
            raise ContractError(message)
        if d != self.encoder.out_dim or self.stop_embedding.shape != (d,):
            message = "Embedding dimension disagrees with the encoder output"
            raise ContractError(message)
        norms = np.linalg.norm(self.agent_embeddings, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
            message = "Agent embeddings must have unit-norm rows"
            raise ContractError(message)
        if not self.temperature > 0:
            message = f"Temperature must be positive, got {self.temperature}"
            raise ContractError(message)

    @property
    def n_agents(self) -> int:
        """Number of routable agents (STOP excluded)."""
        return len(self.agent_ids)

    def stop_unit(self) -> np.ndarray:
        """The STOP embedding, normalised."""
        return self.stop_embedding / np.linalg.norm(self.stop_embedding)

    def action_matrix(self) -> np.ndarray:
        """Rows: agent embeddings in order, then the normalised STOP embedding."""
        return np.vstack([self.agent_embeddings, self.stop_unit()])

    def action_at(self, index: int) -> Action:
        """Map an action index (N means STOP) to an action."""
        return STOP if index == self.n_agents else self.agent_ids[index]

    def index_of(self, action: Action) -> int:
        """Map an action to its index in the score vector."""
        if action == STOP:
            return self.n_agents
        try:
            return self.agent_ids.index(int(action))
        except ValueError as err:
            message = f"Agent {action} is not known to the router"
            raise ContractError(message) from err

    def to_record(self) -> dict[str, Any]:
        """Serialise the model."""
        return {
            "encoder": self.encoder.to_record(),
            "agent_ids": list(self.agent_ids),
            "agent_embeddings": self.agent_embeddings.tolist(),
            "stop_embedding": self.stop_embedding.tolist(),
            "temperature": self.temperature,
            "embedding_seed": self.embedding_seed,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> RouterModel:
        """Deserialise a model."""
        return cls(
            encoder=EncoderParams.from_record(record["encoder"]),
            agent_embeddings=np.array(record["agent_embeddings"], dtype=np.float64),
            stop_embedding=np.array(record["stop_embedding"], dtype=np.float64),
            agent_ids=tuple(int(agent) for agent in record["agent_ids"]),
            temperature=float(record["temperature"]),
            embedding_seed=int(record["embedding_seed"]),
        )


def build_router(  # noqa: PLR0913
    profiles: Sequence[AgentProfile],
    n_classes: int,
    *,
    seed: int,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    temperature: float = DEFAULT_TEMPERATURE,
) -> RouterModel:
    """
    Build a fresh router for an agent population.

    :param profiles: Agent profiles in task order (expertise drives embeddings)
    :param n_classes: Number of answer classes (sizes the state features)
    :param seed: Seed for embeddings, encoder init and the STOP embedding
    """
    f = profiles[0].expertise_vector.size
    d = embedding_dim
    in_dim = feature_dim(f, len(profiles), n_classes)
    stop = derive_rng(seed, "stop-embedding").standard_normal(d)
    return RouterModel(
        encoder=init_encoder(in_dim, hidden_dim, d, seed),
        agent_embeddings=embed_agents(profiles, d, seed),
        stop_embedding=stop / np.linalg.norm(stop),
        agent_ids=tuple(profile.agent_id for profile in profiles),
        temperature=temperature,
        embedding_seed=seed,
    )


@attrs.frozen(eq=False)
class RoutingDecision:
    """Scores, masked probabilities and the chosen action for one state."""

    scores: np.ndarray
    probabilities: np.ndarray
    masked: np.ndarray
    chosen: Action


def action_mask(model: RouterModel, state: SystemState) -> np.ndarray:
    """True where an action is unavailable: executed agents, STOP at step 0."""
    executed = set(state.executed)
    agents = [agent in executed for agent in model.agent_ids]
    return np.array([*agents, not state.history], dtype=bool)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the unmasked entries; masked entries get probability 0."""
    probabilities = np.zeros_like(logits)
    live = ~mask
    shifted = logits[live] - np.max(logits[live])
    weights = np.exp(shifted)
    probabilities[live] = weights / weights.sum()
    return probabilities


def score_agents(model: RouterModel, state: SystemState) -> RoutingDecision:
    """
    Score every action against the state and pick the best unmasked one.

    Ties go to the lowest index, so STOP (last) loses every tie against an agent.

    :raises NoActionError: if every action is masked
    """
    mask = action_mask(model, state)
    if mask.all():
        message = f"No routable action left for task {state.task.task_id}"
        raise NoActionError(message)

    z = encode(model.encoder, featurize_state(state))
    scores = model.action_matrix() @ z
    logits = scores / model.temperature
    probabilities = masked_softmax(logits, mask)
    chosen_index = int(np.argmax(np.where(mask, -np.inf, logits)))
    return RoutingDecision(
        scores=scores,
        probabilities=probabilities,
        masked=mask,
        chosen=model.action_at(chosen_index),
    )


def top_k_agents(model: RouterModel, state: SystemState, k: int) -> list[int]:
    """The k unmasked agents with highest probability, ties to the lowest index."""
    decision = score_agents(model, state)
    live = [i for i in range(model.n_agents) if not decision.masked[i]]
    ranked = sorted(live, key=lambda i: (-decision.probabilities[i], i))
    return [model.agent_ids[i] for i in ranked[:k]]


def decision_record(
    task_id: str, step: int, decision: RoutingDecision
) -> dict[str, Any]:
    """Trace record for one routing decision."""
    return {
        "task_id": task_id,
        "step": step,
        "scores": decision.scores.tolist(),
        "probabilities": decision.probabilities.tolist(),
        "chosen": decision.chosen,
        "masked": decision.masked.tolist(),
        "stop_action": "learned-extension",
    }


def run_inference(
    model: RouterModel,
    scenario: Scenario,
    max_steps: int,
    on_decision: Callable[[dict[str, Any]], None] | None = None,
) -> ExecutionPath:
    """
    Route a task to completion.

    Stops when STOP is chosen, when ``max_steps`` agents have acted, or when no
    agent remains.

    :param model: Router to drive the decisions
    :param scenario: Task, agents and simulation parameters
    :param max_steps: Maximum number of agents to run (>= 1)
    :param on_decision: Receives one trace record per routing decision
    """
    if max_steps < 1:
        message = f"max_steps must be >= 1, got {max_steps}"
        raise ContractError(message)

    state = scenario.initial_state()
    while len(state.history) < max_steps and state.remaining:
        decision = score_agents(model, state)
        if on_decision is not None:
            on_decision(decision_record(scenario.task_id, len(state.history), decision))
        if decision.chosen == STOP:
            break
        state = execute_step(scenario, state, int(decision.chosen))
        _LOGGER.debug(
            "Task %s step %s -> agent %s",
            scenario.task_id,
            len(state.history),
            decision.chosen,
        )

    return make_path(scenario.task, state.history)
