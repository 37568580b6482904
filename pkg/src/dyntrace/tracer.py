"""Binary dynamic Tardos tracer for a single group of users."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dyntrace import core
from dyntrace.core import DISCONNECTED
from dyntrace.errors import InvariantViolation, ParameterError, ProtocolViolation

# Domain tag so tracer streams never collide with other streams of the same seed.
TRACER_STREAM = 0x7472


@dataclass(frozen=True)
class GroupParams:
    """Parameters of one group's inner binary scheme.

    ``block`` holds the two alphabet symbols the tracer owns; bit ``b`` is
    transmitted as ``block[0] + b``.
    """

    c_g: int
    n_g: int
    eps1_g: float
    eps2_g: float
    block: tuple[int, int]
    len_g: int
    threshold_g: float
    delta_g: float

    def __post_init__(self) -> None:
        if self.block[1] != self.block[0] + 1 or self.block[0] < 0:
            raise ParameterError(f"alphabet block must be two consecutive symbols, got {self.block}")
        if self.len_g < 1 or not self.threshold_g > 0:
            raise ParameterError("group codelength and threshold must be positive")
        if not 0 < self.delta_g < 0.5:
            raise ParameterError(f"cutoff must lie in (0, 1/2), got {self.delta_g}")

    @classmethod
    def derive(
        cls,
        c_g: int,
        n_g: int,
        eps1_g: float,
        eps2_g: float,
        index: int = 0,
        d_len: float = core.D_LEN,
        d_thr: float = core.D_THR,
        d_cut: float = core.D_CUT,
    ) -> GroupParams:
        """Fill in codelength, threshold and cutoff from the core formulas."""
        return cls(
            c_g=c_g,
            n_g=n_g,
            eps1_g=eps1_g,
            eps2_g=eps2_g,
            block=(2 * index, 2 * index + 1),
            len_g=core.codelength_static(c_g, n_g, eps1_g, d_len),
            threshold_g=core.threshold(c_g, n_g, eps1_g, d_thr),
            delta_g=core.cutoff(c_g, d_cut),
        )


class TracerState:
    """Mutable state of one group's tracer.

    Columns are generated lazily, the first time a local position is
    emitted, and logged in ``emitted_log`` so the group's code matrix can be
    rebuilt afterwards. Entries for disconnected users hold ``DISCONNECTED``.
    """

    def __init__(
        self,
        params: GroupParams,
        user_ids: Sequence[int],
        rng: np.random.Generator,
        fixed_columns: np.ndarray | None = None,
        fixed_biases: Sequence[float] | None = None,
    ):
        ids = np.asarray(user_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ParameterError("a tracer needs a non-empty list of user ids")
        if np.unique(ids).size != ids.size:
            raise ParameterError("duplicate user ids")
        if fixed_columns is not None:
            fixed_columns = np.asarray(fixed_columns, dtype=np.int16)
            if fixed_columns.shape != (ids.size, params.len_g):
                raise ParameterError(
                    f"fixed code must be {ids.size}x{params.len_g}, got {fixed_columns.shape}"
                )
            if not np.isin(fixed_columns, (0, 1)).all():
                raise ParameterError("fixed code must be binary")
        self.params = params
        self.user_ids = ids
        self.position = 1
        self.scores = np.zeros(ids.size)
        self.active = np.ones(ids.size, dtype=bool)
        self.bias_log: list[float] = []
        self.emitted_log: list[np.ndarray] = []
        self._rng = rng
        self._fixed_columns = fixed_columns
        self._fixed_biases = None if fixed_biases is None else list(fixed_biases)
        self._index = {int(u): j for j, u in enumerate(ids)}

    @property
    def finished(self) -> bool:
        return self.position > self.params.len_g

    @property
    def active_ids(self) -> np.ndarray:
        return self.user_ids[self.active]

    @property
    def disconnected_ids(self) -> np.ndarray:
        return self.user_ids[~self.active]

    def owns(self, symbol: int) -> bool:
        return self.params.block[0] <= symbol <= self.params.block[1]

    def emit_segment(self) -> np.ndarray:
        """Symbols for the current local position, aligned with ``user_ids``.

        Repeated calls at the same position return the same logged column.
        """
        if self.finished:
            raise ProtocolViolation("tracer is finished; its users must receive lambda")
        if len(self.emitted_log) < self.position:
            self._generate()
        return self.emitted_log[self.position - 1]

    def _generate(self) -> None:
        i = self.position - 1
        if self._fixed_biases is not None:
            p = self._fixed_biases[i]
        else:
            p = core.draw_bias(self.params.delta_g, self._rng)
        column = np.full(self.user_ids.size, DISCONNECTED, dtype=np.int16)
        live = np.flatnonzero(self.active)
        if self._fixed_columns is not None:
            column[live] = self._fixed_columns[live, i] + self.params.block[0]
        else:
            column[live] = core.generate_column(p, live, self._rng, self.params.block[0])
        column.flags.writeable = False
        self.bias_log.append(p)
        self.emitted_log.append(column)

    def ingest_feedback(self, symbol: int) -> np.ndarray:
        """Score the pirate symbol against the current column; return newly disconnected ids."""
        if self.finished:
            raise ProtocolViolation("feedback routed to a finished tracer")
        if not self.owns(symbol):
            raise ProtocolViolation(f"symbol {symbol} outside block {self.params.block}")
        if len(self.emitted_log) < self.position:
            raise ProtocolViolation("feedback before the column was emitted")
        i = self.position - 1
        p = self.bias_log[i]
        live = np.flatnonzero(self.active)
        bits = self.emitted_log[i][live] - self.params.block[0]
        self.scores[live] += core.score_column(bits, symbol - self.params.block[0], p)
        caught = live[self.scores[live] > self.params.threshold_g]
        self.active[caught] = False
        self.position += 1
        return self.user_ids[caught]

    def disconnect(self, user_ids: Sequence[int]) -> np.ndarray:
        """Force disconnection of the given users (used by fixture replays)."""
        rows = np.array([self._index[int(u)] for u in user_ids], dtype=np.int64)
        rows = rows[self.active[rows]] if rows.size else rows
        self.active[rows] = False
        return self.user_ids[rows]

    def code_matrix(self) -> np.ndarray:
        """The group's code so far: one row per user, one column per emitted position."""
        if not self.emitted_log:
            return np.empty((self.user_ids.size, 0), dtype=np.int16)
        return np.column_stack(self.emitted_log)

    def check_invariants(self) -> None:
        if not 1 <= self.position <= self.params.len_g + 1:
            raise InvariantViolation(f"local position {self.position} out of range")
        if np.any(self.scores[self.active] > self.params.threshold_g):
            raise InvariantViolation("active user above threshold")
        if len(self.emitted_log) > self.position:
            raise InvariantViolation("more columns emitted than positions reached")


def tracer_rng(seed: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(TRACER_STREAM, salt)))


def new_tracer(
    group_params: GroupParams, user_ids: Sequence[int], seed: int, salt: int = 0
) -> TracerState:
    """Fresh tracer with all users active at score 0; ``salt`` separates groups."""
    return TracerState(group_params, user_ids, tracer_rng(seed, salt))
