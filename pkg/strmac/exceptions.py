"""Exceptions raised by strmac."""

from __future__ import annotations


class StrmacError(Exception):
    """Base class for every error raised by the engine."""


class ContractError(StrmacError, ValueError):
    """A precondition or invariant was violated by the caller."""


class SearchCapError(ContractError):
    """The agent count exceeds what a tree search is allowed to enumerate."""

    def __init__(self, n_agents: int, cap: int) -> None:
        """
        Initialise the error.

        :param n_agents: Number of agents on the offending task
        :param cap: Configured maximum agent count for tree searches
        """
        super().__init__(
            f"Tree search over {n_agents} agents exceeds the search cap of {cap}"
        )
        self.n_agents = n_agents
        self.cap = cap


class DegenerateEmbeddingError(StrmacError, ArithmeticError):
    """The encoder produced a vector too short to normalise."""


class NoActionError(StrmacError):
    """Every routing option is masked, so no decision can be made."""
