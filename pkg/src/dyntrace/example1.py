"""Replay of a small eight-user, four-symbol worked example.

The example fixes both group codes and the pirate output but not the biases
or scores behind the disconnections, so the replay injects the codes and
applies the disconnections visible in the reference matrix (the dashes).
Users are numbered 1..8 externally; internally they are 0..7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dyntrace.conquer import GroupAssignment, Orchestrator, Status
from dyntrace.core import DISCONNECTED, LAMBDA
from dyntrace.errors import ProtocolViolation
from dyntrace.tracer import GroupParams, TracerState

X1 = np.array(
    [
        [0, 1, 0, 1, 1],
        [0, 0, 1, 1, 0],
        [1, 0, 1, 0, 1],
        [1, 1, 0, 0, 0],
    ]
)
X2 = np.array(
    [
        [2, 2, 3, 2, 2],
        [3, 2, 2, 3, 3],
        [3, 3, 3, 3, 2],
        [2, 3, 2, 2, 3],
    ]
)
Y = (3, 0, 3, 3, 1, 1, 2, 3, 0, 1)
COLLUDERS = (1, 3, 7, 8)
GROUPS = ((1, 2, 3, 4), (5, 6, 7, 8))
# Segment after which each user shows up as a dash.
DISCONNECT_AFTER = {4: (7,), 8: (8,), 10: (1, 3)}

# Reference combined matrix; "l" is lambda and "-" a disconnected user.
X_REFERENCE = [
    "0 0 1 1 1 0 1 1 1 1 -",
    "0 0 0 0 0 1 1 1 1 0 l",
    "1 1 0 0 0 1 0 0 0 1 -",
    "1 1 1 1 1 0 0 0 0 0 l",
    "2 2 2 3 2 2 2 2 l l l",
    "3 2 2 2 3 3 3 3 l l l",
    "3 3 3 3 - - - - - - -",
    "2 3 3 2 2 2 2 3 - - -",
]
SCHEDULE = {1: (2, 5, 6, 9, 10), 2: (1, 3, 4, 7, 8)}


@dataclass
class ReplayReport:
    schedule: dict[int, list[int]] = field(default_factory=lambda: {1: [], 2: []})
    matrix: list[list[str]] = field(default_factory=list)
    pointers: tuple[int, ...] = ()
    complete: bool = False
    checks: dict[str, bool] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and all(self.checks.values())

    def lines(self) -> list[str]:
        out = [f"{name}: {'PASS' if ok else 'FAIL'}" for name, ok in self.checks.items()]
        out += [f"  {msg}" for msg in self.failures]
        out.append("example 1 replay: " + ("PASS" if self.passed else "FAIL"))
        return out


def _render(symbols: np.ndarray) -> list[str]:
    return ["l" if s == LAMBDA else "-" if s == DISCONNECTED else str(int(s)) for s in symbols]


def build_orchestrator() -> Orchestrator:
    groups = tuple(np.array(g) - 1 for g in GROUPS)
    tracers = []
    for t, (g, code) in enumerate(zip(groups, (X1, X2 - 2))):
        # Placeholder error budgets; the example has none.
        params = GroupParams(
            c_g=2,
            n_g=4,
            eps1_g=0.5,
            eps2_g=0.5,
            block=(2 * t, 2 * t + 1),
            len_g=5,
            threshold_g=math.inf,
            delta_g=0.25,
        )
        tracers.append(
            TracerState(params, g, np.random.default_rng(0), fixed_columns=code, fixed_biases=[0.5] * 5)
        )
    return Orchestrator(GroupAssignment(groups), tracers)


def replay_example1(y: tuple[int, ...] = Y) -> ReplayReport:
    report = ReplayReport()
    orch = build_orchestrator()
    colluders = np.array(COLLUDERS) - 1
    active_colluders = set(colluders.tolist())
    columns: list[np.ndarray] = []
    marking_ok = True

    for seg, symbol in enumerate(y, start=1):
        if orch.status is not Status.RUNNING:
            report.failures.append(f"segment {seg}: run already {orch.status.value}")
            break
        a = orch.next_segment()
        columns.append(a)
        held = {int(a[j]) for j in active_colluders if a[j] >= 0}
        if symbol not in held:
            marking_ok = False
            report.failures.append(f"segment {seg}: pirate symbol {symbol} not held by colluders {sorted(held)}")
        try:
            ev = orch.process_output(symbol)
        except ProtocolViolation as exc:
            report.failures.append(f"segment {seg}: protocol violation: {exc}")
            break
        if ev.group is not None:
            report.schedule[ev.group + 1].append(seg)
        for u in DISCONNECT_AFTER.get(seg, ()):
            t = 0 if u in GROUPS[0] else 1
            orch.tracers[t].disconnect([u - 1])
            active_colluders.discard(u - 1)

    report.pointers = orch.pointers
    report.complete = all(tr.finished for tr in orch.tracers)
    if report.complete and not active_colluders and orch.status is not Status.FAILED_LAMBDA:
        # The closing column: every remaining user holds lambda, no pirate output.
        columns.append(orch.current_assignment())
        orch.mark_succeeded()
    elif not report.complete:
        report.failures.append(
            f"incomplete run: pointers {report.pointers} not all past {orch.tracers[0].params.len_g}"
        )

    for seg in range(1, len(y) + 1):
        want = 1 if seg in SCHEDULE[1] else 2
        got = 1 if seg in report.schedule[1] else 2 if seg in report.schedule[2] else None
        if got != want:
            report.failures.insert(0, f"segment {seg}: routed to group {got}, expected group {want}")
            break
    report.checks["routing"] = {t: tuple(s) for t, s in report.schedule.items()} == SCHEDULE
    report.checks["marking"] = marking_ok

    report.matrix = [list(r) for r in zip(*(_render(c) for c in columns))] if columns else []
    expected = [row.split() for row in X_REFERENCE]
    lam_cells = [(r, c) for r, row in enumerate(expected) for c, v in enumerate(row) if v == "l"]
    got_m = report.matrix
    shape_ok = len(got_m) == 8 and all(len(r) == 11 for r in got_m)
    report.checks["lambda-fill"] = shape_ok and all(got_m[r][c] == "l" for r, c in lam_cells)
    report.checks["matrix"] = shape_ok and got_m == expected
    if shape_ok:
        for r in range(8):
            for c in range(11):
                if got_m[r][c] != expected[r][c]:
                    report.failures.append(
                        f"segment {c + 1}: user {r + 1} holds {got_m[r][c]}, expected {expected[r][c]}"
                    )

    recon_ok = True
    for t, code in ((1, X1), (2, X2)):
        rows = np.array(GROUPS[t - 1]) - 1
        bold = [columns[s - 1][rows] for s in report.schedule[t] if s <= len(columns)]
        rebuilt = np.column_stack(bold) if bold else np.empty((4, 0))
        # Disconnected users (dashes) hide their entries; the rest must match.
        shown = rebuilt != DISCONNECTED
        if rebuilt.shape != code.shape or not np.array_equal(rebuilt[shown], code[shown]):
            recon_ok = False
            report.failures.append(f"group {t}: bold columns do not rebuild the group code")
        tracer_code = orch.tracers[t - 1].code_matrix()[:, : len(report.schedule[t])]
        if not np.array_equal(tracer_code, rebuilt):
            recon_ok = False
            report.failures.append(f"group {t}: emitted log differs from routed columns")
    report.checks["reconstruction"] = recon_ok
    return report
