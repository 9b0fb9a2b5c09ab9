"""
State featuriser, fixed agent embeddings and the trainable router encoder.

The encoder is a two-layer tanh perceptron whose output is unit-normalised, so
every score the router computes against a unit agent embedding is a cosine.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

import attrs
import numpy as np

from .const import DEGENERATE_NORM, SYMMETRY_BREAK_SCALE
from .core import AgentProfile, SystemState, derive_rng
from .exceptions import ContractError, DegenerateEmbeddingError

if TYPE_CHECKING:
    from collections.abc import Sequence

_LOGGER = logging.getLogger(__name__)


def feature_dim(f: int, n_agents: int, n_classes: int) -> int:
    """Length of a state feature vector for the given task shape."""
    return f + n_agents * (2 + n_classes)


def featurize_state(state: SystemState) -> np.ndarray:
    """
    Featurise a system state.

    Layout: the query features, then one block per agent in task order holding
    [executed flag, position / N, one-hot answer (zeros when not executed)].
    """
    task = state.task
    n_agents, n_classes = task.n_agents, task.n_classes
    block = 2 + n_classes
    features = np.zeros(feature_dim(task.feature_dim, n_agents, n_classes))
    features[: task.feature_dim] = task.query_features
    for position, step in enumerate(state.history, start=1):
        offset = task.feature_dim + task.agent_index(step.agent_id) * block
        features[offset] = 1.0
        features[offset + 1] = position / n_agents
        features[offset + 2 + step.answer] = 1.0
    return features


def embed_agent(profile: AgentProfile, d: int, seed: int) -> np.ndarray:
    """
    Build the fixed embedding of an agent.

    The expertise vector fills the first f coordinates; the remaining d - f are
    a small seeded pattern keyed by the agent id, then the whole vector is
    normalised.

    :raises ContractError: if d is smaller than the expertise dimension
    """
    f = profile.expertise_vector.size
    if d < f:
        message = f"Embedding dimension {d} is smaller than expertise dimension {f}"
        raise ContractError(message)
    if d == f:
        return profile.expertise_vector.copy()
    rng = derive_rng(seed, "agent-embedding", profile.agent_id)
    pad = rng.uniform(-1.0, 1.0, d - f)
    embedding = np.concatenate([profile.expertise_vector, SYMMETRY_BREAK_SCALE * pad])
    return embedding / np.linalg.norm(embedding)


@attrs.frozen(eq=False)
class EncoderParams:
    """Weights of the router encoder: x -> W2 tanh(W1 x + b1) + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int | None = None

    def __attrs_post_init__(self) -> None:
        """Check shape agreement and finiteness."""
        hidden, _ = self.w1.shape
        out, hidden2 = self.w2.shape
        if hidden2 != hidden or self.b1.shape != (hidden,) or self.b2.shape != (out,):
            message = (
                f"Inconsistent encoder shapes w1={self.w1.shape} b1={self.b1.shape} "
                f"w2={self.w2.shape} b2={self.b2.shape}"
            )
            raise ContractError(message)
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                message = f"Encoder block {name} has non-finite entries"
                raise ContractError(message)

    @property
    def in_dim(self) -> int:
        """Input (state feature) dimension."""
        return int(self.w1.shape[1])

    @property
    def hidden_dim(self) -> int:
        """Hidden width h."""
        return int(self.w1.shape[0])

    @property
    def out_dim(self) -> int:
        """Embedding dimension d."""
        return int(self.w2.shape[0])

    def blocks(self) -> dict[str, np.ndarray]:
        """Parameter blocks by name."""
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> EncoderParams:
        """Deep copy (training mutates private copies only)."""
        return EncoderParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            seed=self.seed,
        )

    def to_record(self) -> dict[str, Any]:
        """Flat JSON form: dims, row-major weights and seed provenance."""
        return {
            "in_dim": self.in_dim,
            "hidden_dim": self.hidden_dim,
            "out_dim": self.out_dim,
            "activation": "tanh",
            "w1": self.w1.reshape(-1).tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.reshape(-1).tolist(),
            "b2": self.b2.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> EncoderParams:
        """Rebuild from the flat JSON form."""
        in_dim, hidden, out = record["in_dim"], record["hidden_dim"], record["out_dim"]
        return cls(
            w1=np.array(record["w1"], dtype=np.float64).reshape(hidden, in_dim),
            b1=np.array(record["b1"], dtype=np.float64),
            w2=np.array(record["w2"], dtype=np.float64).reshape(out, hidden),
            b2=np.array(record["b2"], dtype=np.float64),
            seed=record.get("seed"),
        )


def init_encoder(
    in_dim: int, hidden_dim: int, out_dim: int, seed: int
) -> EncoderParams:
    """Glorot-uniform weights, zero biases, drawn from the seeded generator."""
    rng = derive_rng(seed, "encoder-init")

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return EncoderParams(
        w1=glorot(hidden_dim, in_dim),
        b1=np.zeros(hidden_dim),
        w2=glorot(out_dim, hidden_dim),
        b2=np.zeros(out_dim),
        seed=seed,
    )


@attrs.frozen(eq=False)
class EncoderTrace:
    """Activations of a batched forward pass, kept for backpropagation."""

    x: np.ndarray
    a: np.ndarray
    u: np.ndarray
    norm: np.ndarray
    z: np.ndarray


def forward(params: EncoderParams, x: np.ndarray) -> EncoderTrace:
    """
    Batched forward pass over the rows of ``x``.

    :raises ContractError: on a feature-dimension mismatch
    :raises DegenerateEmbeddingError: if any pre-normalisation output is ~0
    """
    x = np.atleast_2d(x)
    if x.shape[1] != params.in_dim:
        message = f"Feature dimension {x.shape[1]} != encoder input {params.in_dim}"
        raise ContractError(message)
    a = np.tanh(x @ params.w1.T + params.b1)
    u = a @ params.w2.T + params.b2
    norm = np.linalg.norm(u, axis=1)
    if np.any(norm < DEGENERATE_NORM):
        message = "Encoder output norm below 1e-12; cannot normalise"
        raise DegenerateEmbeddingError(message)
    return EncoderTrace(x=x, a=a, u=u, norm=norm, z=u / norm[:, None])


def encode(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    """Encode one state feature vector into a unit embedding z."""
    return forward(params, features).z[0]


def embed_agents(profiles: Sequence[AgentProfile], d: int, seed: int) -> np.ndarray:
    """Stack agent embeddings as the rows of an N x d matrix."""
    return np.stack([embed_agent(profile, d, seed) for profile in profiles])
