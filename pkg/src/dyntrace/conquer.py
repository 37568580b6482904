"""Divide-and-conquer composition of k binary tracers into one q-ary scheme (q = 2k)."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from dyntrace.core import DISCONNECTED, LAMBDA, SchemeParams
from dyntrace.errors import InvariantViolation, ParameterError, ProtocolViolation
from dyntrace.tracer import GroupParams, TracerState, tracer_rng


def alpha_k(k: int, eps2: float) -> float:
    """Tail constant with ``alpha_k * sqrt(c/k) = sqrt(c/2 * ln(2k/eps2))``.

    Union of the k one-sided hypergeometric tails ``exp(-2a^2/c)``, each
    bounded by ``eps2 / (2k)``. At ``k = 2`` this is ``sqrt(ln(4/eps2))``.
    """
    if k < 1 or not 0 < eps2 < 1:
        raise ParameterError(f"need k >= 1 and 0 < eps2 < 1, got k={k} eps2={eps2}")
    return math.sqrt(k / 2 * math.log(2 * k / eps2))


def group_capacity(c: int, k: int, eps2: float) -> int:
    """Colluders each group's tracer must withstand: ``ceil(c/k + alpha_k sqrt(c/k))``."""
    if c < 1:
        raise ParameterError(f"c must be >= 1, got {c}")
    return math.ceil(c / k + alpha_k(k, eps2) * math.sqrt(c / k))


@dataclass(frozen=True)
class GroupAssignment:
    groups: tuple[np.ndarray, ...]

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return sum(g.size for g in self.groups)

    def group_of(self) -> dict[int, int]:
        return {int(u): t for t, g in enumerate(self.groups) for u in g}


def split_users(user_ids: Sequence[int], k: int, rng: np.random.Generator) -> GroupAssignment:
    """Uniform random partition into k groups whose sizes differ by at most one."""
    ids = np.asarray(user_ids, dtype=np.int64)
    if k < 1 or k > ids.size:
        raise ParameterError(f"cannot split {ids.size} users into {k} groups")
    perm = rng.permutation(ids)
    return GroupAssignment(tuple(np.sort(g) for g in np.array_split(perm, k)))


def derive_group_params(params: SchemeParams, k: int | None = None) -> list[GroupParams]:
    k = params.k if k is None else k
    if params.q != 2 * k:
        raise ParameterError(f"q={params.q} does not equal 2k for k={k}")
    c_g = group_capacity(params.c, k, params.eps2)
    n_g = math.ceil(params.n / k)
    return [
        GroupParams.derive(
            c_g,
            n_g,
            params.eps1 / k,
            params.eps2 / (2 * k),
            index=t,
            d_len=params.d_len,
            d_thr=params.d_thr,
            d_cut=params.d_cut,
        )
        for t in range(k)
    ]


class Status(str, Enum):
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED_LAMBDA = "failed-lambda-output"
    EXHAUSTED = "exhausted"


@dataclass
class SegmentReport:
    segment: int
    symbol: int
    group: int | None
    pointer: int | None
    disconnected: tuple[int, ...] = ()
    status: Status = Status.RUNNING
    status_changed: bool = False

    def to_dict(self) -> dict:
        return {
            "segment": self.segment,
            "symbol": self.symbol,
            "group": self.group,
            "pointer": self.pointer,
            "disconnected": list(self.disconnected),
            "status": self.status.value,
        }


def assignment_digest(symbols: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(symbols, dtype="<i2").tobytes()).hexdigest()[:16]


@dataclass
class Orchestrator:
    """Interleaves k group tracers over a shared segment counter.

    Users are the integers ``0..n-1``. Each segment every active user of an
    unfinished group receives that group's current symbol; active users of
    finished groups receive ``LAMBDA``. The pirate symbol advances exactly the
    tracer owning its block.
    """

    assignment: GroupAssignment
    tracers: list[TracerState]
    global_position: int = 1
    status: Status = Status.RUNNING
    trace: list[dict] | None = None
    _pending: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.tracers) != self.assignment.k:
            raise ParameterError("one tracer per group required")
        self.n = self.assignment.n
        for t, (tr, g) in enumerate(zip(self.tracers, self.assignment.groups)):
            if tr.params.block != (2 * t, 2 * t + 1):
                raise ParameterError(f"tracer {t} owns block {tr.params.block}")
            if not np.array_equal(np.sort(tr.user_ids), np.sort(g)):
                raise ParameterError(f"tracer {t} users differ from its group")
        if not np.array_equal(np.sort(np.concatenate(self.assignment.groups)), np.arange(self.n)):
            raise ParameterError("groups must partition 0..n-1")

    @property
    def k(self) -> int:
        return len(self.tracers)

    @property
    def q(self) -> int:
        return 2 * self.k

    @property
    def budget(self) -> int:
        return sum(tr.params.len_g for tr in self.tracers)

    @property
    def pointers(self) -> tuple[int, ...]:
        return tuple(tr.position for tr in self.tracers)

    def current_assignment(self) -> np.ndarray:
        """What every user holds at the current global position (no state change)."""
        out = np.full(self.n, DISCONNECTED, dtype=np.int16)
        for tr in self.tracers:
            if tr.finished:
                out[tr.active_ids] = LAMBDA
            else:
                out[tr.user_ids] = tr.emit_segment()
        return out

    def next_segment(self) -> np.ndarray:
        if self.status is not Status.RUNNING:
            raise ProtocolViolation(f"next_segment while {self.status.value}")
        out = self.current_assignment()
        self._pending = True
        if self.trace is not None:
            self.trace.append(
                {"segment": self.global_position, "event": "emit", "digest": assignment_digest(out)}
            )
        return out

    def process_output(self, symbol: int) -> SegmentReport:
        if self.status is not Status.RUNNING:
            raise ProtocolViolation(f"process_output while {self.status.value}")
        if not self._pending:
            raise ProtocolViolation("pirate output before the segment was sent")
        segment = self.global_position
        if symbol == LAMBDA:
            self._pending = False
            self.status = Status.FAILED_LAMBDA
            report = SegmentReport(segment, LAMBDA, None, None, (), self.status, True)
        else:
            symbol = int(symbol)
            t = symbol // 2
            if not 0 <= t < self.k:
                raise ProtocolViolation(f"symbol {symbol} outside alphabet 0..{self.q - 1}")
            tracer = self.tracers[t]
            if tracer.finished:
                raise ProtocolViolation(
                    f"symbol {symbol} from finished group {t} at segment {segment}"
                )
            caught = tracer.ingest_feedback(symbol)
            self._pending = False
            self.global_position += 1
            changed = False
            if self.global_position > self.budget:
                self.status = Status.EXHAUSTED
                changed = True
            report = SegmentReport(
                segment, symbol, t, tracer.position, tuple(int(u) for u in caught), self.status, changed
            )
        if self.trace is not None:
            self.trace.append({"event": "output", **report.to_dict()})
        return report

    def mark_succeeded(self) -> None:
        """Record that no colluder remains connected.

        Allowed from ``EXHAUSTED`` as well: the last budgeted segment may be
        the one that disconnects the last colluder.
        """
        if self.status not in (Status.RUNNING, Status.EXHAUSTED):
            raise ProtocolViolation(f"cannot mark success while {self.status.value}")
        self.status = Status.SUCCEEDED
        self._pending = False

    def run_status(self) -> Status:
        return self.status

    def disconnected_ids(self) -> np.ndarray:
        return np.concatenate([tr.disconnected_ids for tr in self.tracers])

    def check_invariants(self) -> None:
        advanced = sum(tr.position - 1 for tr in self.tracers)
        if advanced != self.global_position - 1:
            raise InvariantViolation(
                f"pointer sum {advanced} != segments processed {self.global_position - 1}"
            )
        if self.global_position > self.budget + 1:
            raise InvariantViolation("global position beyond budget")
        for tr in self.tracers:
            tr.check_invariants()


def new_orchestrator(
    params: SchemeParams,
    seed: int,
    split_rng: np.random.Generator,
    record_trace: bool = False,
) -> Orchestrator:
    """Split ``0..n-1`` with ``split_rng`` and build one seeded tracer per group."""
    k = params.k
    assignment = split_users(np.arange(params.n), k, split_rng)
    tracers = [
        TracerState(gp, assignment.groups[t], tracer_rng(seed, t))
        for t, gp in enumerate(derive_group_params(params, k))
    ]
    return Orchestrator(assignment, tracers, trace=[] if record_trace else None)
