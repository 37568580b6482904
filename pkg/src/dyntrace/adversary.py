"""Pirate coalition under the restricted digit model."""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from dyntrace.core import DISCONNECTED, LAMBDA
from dyntrace.errors import ParameterError, ProtocolViolation


class AttackStrategy(str, Enum):
    INTERLEAVE = "interleave-uniform"
    MAJORITY = "majority-vote"
    MINORITY = "minority-vote"
    SCAPEGOAT = "scapegoat"
    COIN_FLIP = "coin-flip-per-symbol-class"

    @classmethod
    def parse(cls, name: str | AttackStrategy) -> AttackStrategy:
        try:
            return cls(name)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ParameterError(f"unknown strategy {name!r}; choose one of {names}") from None


class Coalition:
    """Colluders that see only their own symbols.

    Strategies pick among the non-lambda symbols held by active members:

    * interleave-uniform: the symbol of a uniformly random holder
    * majority-vote / minority-vote: most / least frequent symbol
    * scapegoat: the first holder in member order (``members[0]`` while it lasts)
    * coin-flip-per-symbol-class: a uniformly random distinct symbol

    Ties go to the lowest symbol value.
    """

    def __init__(
        self,
        members: Sequence[int],
        strategy: str | AttackStrategy,
        rng: np.random.Generator,
    ):
        self.members = np.asarray(members, dtype=np.int64)
        if np.unique(self.members).size != self.members.size:
            raise ParameterError("duplicate colluder ids")
        self.strategy = AttackStrategy.parse(strategy)
        self.active = np.ones(self.members.size, dtype=bool)
        self.received: np.ndarray | None = None
        self._rng = rng

    @property
    def active_ids(self) -> np.ndarray:
        return self.members[self.active]

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def observe(self, assignment: np.ndarray) -> np.ndarray:
        """Record the symbols (or lambdas) of the active members, in member order."""
        got = np.asarray(assignment)[self.active_ids]
        if np.any(got == DISCONNECTED):
            raise ProtocolViolation("active colluder missing from the assignment")
        self.received = got
        return got

    def decide(self) -> int:
        if self.received is None:
            raise ProtocolViolation("decide called before observe")
        held = self.received[self.received != LAMBDA]
        self.received = None
        if held.size == 0:
            return LAMBDA
        s = self.strategy
        if s is AttackStrategy.INTERLEAVE:
            return int(held[self._rng.integers(held.size)])
        if s is AttackStrategy.SCAPEGOAT:
            return int(held[0])
        values, counts = np.unique(held, return_counts=True)
        if s is AttackStrategy.MAJORITY:
            return int(values[np.argmax(counts)])
        if s is AttackStrategy.MINORITY:
            return int(values[np.argmin(counts)])
        return int(values[self._rng.integers(values.size)])

    def notify_disconnect(self, user_ids: Sequence[int]) -> np.ndarray:
        ids = np.asarray(user_ids, dtype=np.int64)
        hit = np.isin(self.members, ids)
        if hit.sum() != np.unique(ids).size:
            raise ParameterError("disconnect notice for a non-member")
        self.active &= ~hit
        return self.active_ids
