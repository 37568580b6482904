"""Monte Carlo harness: trials, aggregation, codelength predictions, export."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from dyntrace import core
from dyntrace.adversary import AttackStrategy, Coalition
from dyntrace.conquer import Orchestrator, Status, new_orchestrator
from dyntrace.core import LAMBDA, SchemeParams
from dyntrace.errors import InvariantViolation, ParameterError

SCHEMA_VERSION = 1

OUTCOMES = ("all-caught", "exhausted", "lambda-failed")
_OUTCOME_OF = {
    Status.SUCCEEDED: "all-caught",
    Status.EXHAUSTED: "exhausted",
    Status.FAILED_LAMBDA: "lambda-failed",
}


@dataclass(frozen=True)
class ExperimentConfig:
    params: SchemeParams
    strategy: str = AttackStrategy.INTERLEAVE.value
    trials: int = 100
    master_seed: int = 0
    # Planted coalition size; defaults to params.c.
    coalition_size: int | None = None
    check_invariants: bool = False
    out: str | None = None
    format: str = "jsonl"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        AttackStrategy.parse(self.strategy)
        if not 0 <= self.colluders <= self.params.c:
            raise ParameterError(f"coalition size must lie in 0..c, got {self.colluders}")
        if self.format not in FORMATS:
            raise ParameterError(f"unknown format {self.format!r}")

    @property
    def colluders(self) -> int:
        return self.params.c if self.coalition_size is None else self.coalition_size

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        param_keys = {f.name for f in fields(SchemeParams)}
        params = SchemeParams(**{k: d.pop(k) for k in list(d) if k in param_keys})
        if "seed" in d:
            d["master_seed"] = d.pop("seed")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(params=params, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("params"))
        return d


@dataclass(frozen=True)
class RunRecord:
    trial: int
    seed: int
    outcome: str
    segments_used: int
    budget: int
    innocent_accused_count: int
    colluders_caught_count: int
    colluders: int
    pointers: tuple[int, ...]

    SCHEMA = "dyntrace.run_record"
    COLUMNS = (
        ("trial", int),
        ("seed", int),
        ("outcome", str),
        ("segments_used", int),
        ("budget", int),
        ("innocent_accused_count", int),
        ("colluders_caught_count", int),
        ("colluders", int),
        ("pointers", tuple),
    )

    @property
    def failed(self) -> bool:
        return self.outcome != "all-caught"


@dataclass(frozen=True)
class AggregateStats:
    trials: int
    false_positive_trials: int
    eps1_hat: float
    eps1_lo: float
    eps1_hi: float
    failed_trials: int
    eps2_hat: float
    eps2_lo: float
    eps2_hi: float
    segments_mean: float
    segments_median: float
    segments_p95: float
    wall_time: float
    interval: str = "wilson-95"

    SCHEMA = "dyntrace.aggregate_stats"
    COLUMNS = (
        ("trials", int),
        ("false_positive_trials", int),
        ("eps1_hat", float),
        ("eps1_lo", float),
        ("eps1_hi", float),
        ("failed_trials", int),
        ("eps2_hat", float),
        ("eps2_lo", float),
        ("eps2_hi", float),
        ("segments_mean", float),
        ("segments_median", float),
        ("segments_p95", float),
        ("wall_time", float),
        ("interval", str),
    )


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ParameterError(f"bad counts {successes}/{trials}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def trial_seed(master_seed: int, trial: int) -> int:
    """Seed of trial ``trial``; a pure function of (master_seed, trial)."""
    ss = np.random.SeedSequence([master_seed, trial])
    return int(ss.generate_state(1, np.uint64)[0])


class _RunChecker:
    """Inline assertions of the cross-module invariants for one trial."""

    def __init__(self, orch: Orchestrator):
        self.orch = orch
        self.prev_active = [tr.active.copy() for tr in orch.tracers]
        self.routed: list[list[np.ndarray]] = [[] for _ in orch.tracers]
        self.segments = 0

    def after_output(self, received: np.ndarray, assignment: np.ndarray, y: int, report) -> None:
        held = received[received != LAMBDA]
        if y == LAMBDA:
            if held.size:
                raise InvariantViolation(f"lambda output while colluders hold {held.tolist()}")
        else:
            if y not in held:
                raise InvariantViolation(f"marking condition violated: {y} not in {held.tolist()}")
            t = report.group
            self.routed[t].append(assignment[self.orch.tracers[t].user_ids].copy())
            self.segments += 1
        for t, tr in enumerate(self.orch.tracers):
            if np.any(tr.active & ~self.prev_active[t]):
                raise InvariantViolation(f"user reconnected in group {t}")
            self.prev_active[t] = tr.active.copy()
        self.orch.check_invariants()
        if sum(tr.position - 1 for tr in self.orch.tracers) != self.segments:
            raise InvariantViolation("pointer advances do not match processed outputs")

    def finish(self) -> None:
        if self.segments > self.orch.budget:
            raise InvariantViolation("budget exceeded")
        for t, tr in enumerate(self.orch.tracers):
            logged = tr.emitted_log[: tr.position - 1]
            if len(logged) != len(self.routed[t]) or not all(
                np.array_equal(a, b) for a, b in zip(logged, self.routed[t])
            ):
                raise InvariantViolation(f"interleaving reconstruction failed for group {t}")


def run_trial(
    config: ExperimentConfig, seed: int, trial: int = 0, trace: list[dict] | None = None
) -> RunRecord:
    """Plant a coalition and run the protocol loop to completion.

    If ``trace`` is a list, per-segment emit/output events are appended to it.
    """
    params = config.params
    place_ss, split_ss, adversary_ss = np.random.SeedSequence(seed).spawn(3)
    members = np.random.default_rng(place_ss).choice(params.n, size=config.colluders, replace=False)
    orch = new_orchestrator(params, seed, np.random.default_rng(split_ss))
    orch.trace = trace
    coalition = Coalition(members, config.strategy, np.random.default_rng(adversary_ss))
    checker = _RunChecker(orch) if config.check_invariants else None
    member_set = set(int(m) for m in members)

    if coalition.n_active == 0:
        orch.mark_succeeded()
    while orch.status is Status.RUNNING:
        assignment = orch.next_segment()
        received = coalition.observe(assignment)
        y = coalition.decide()
        report = orch.process_output(y)
        caught = [u for u in report.disconnected if u in member_set]
        if caught:
            coalition.notify_disconnect(caught)
        if checker is not None:
            checker.after_output(received, assignment, y, report)
        if coalition.n_active == 0:
            orch.mark_succeeded()
    if checker is not None:
        checker.finish()

    disconnected = orch.disconnected_ids()
    caught_count = int(np.isin(members, disconnected).sum())
    if caught_count + coalition.n_active != config.colluders:
        raise InvariantViolation("colluder accounting mismatch")
    return RunRecord(
        trial=trial,
        seed=seed,
        outcome=_OUTCOME_OF[orch.status],
        segments_used=orch.global_position - 1,
        budget=orch.budget,
        innocent_accused_count=int(disconnected.size) - caught_count,
        colluders_caught_count=caught_count,
        colluders=config.colluders,
        pointers=orch.pointers,
    )


def _run_indexed(args: tuple[ExperimentConfig, int]) -> RunRecord:
    config, trial = args
    return run_trial(config, trial_seed(config.master_seed, trial), trial)


def run_trials(config: ExperimentConfig, workers: int = 1) -> list[RunRecord]:
    """All trials in trial-id order; the result does not depend on ``workers``."""
    jobs = [(config, t) for t in range(config.trials)]
    if workers <= 1:
        return [_run_indexed(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_indexed, jobs, chunksize=chunk))


def aggregate(records: Sequence[RunRecord], wall_time: float = 0.0) -> AggregateStats:
    if not records:
        raise ParameterError("cannot aggregate zero records")
    trials = len(records)
    fp = sum(r.innocent_accused_count > 0 for r in records)
    fn = sum(r.failed for r in records)
    used = np.array([r.segments_used for r in records], dtype=float)
    e1 = wilson_interval(fp, trials)
    e2 = wilson_interval(fn, trials)
    return AggregateStats(
        trials=trials,
        false_positive_trials=fp,
        eps1_hat=fp / trials,
        eps1_lo=e1[0],
        eps1_hi=e1[1],
        failed_trials=fn,
        eps2_hat=fn / trials,
        eps2_lo=e2[0],
        eps2_hi=e2[1],
        segments_mean=float(used.mean()),
        segments_median=float(np.median(used)),
        segments_p95=float(np.percentile(used, 95)),
        wall_time=wall_time,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    stats: AggregateStats = field(repr=False)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    start = time.perf_counter()
    records = run_trials(config, workers)
    stats = aggregate(records, time.perf_counter() - start)
    if config.out:
        export(records, config.out, config.format)
    return ExperimentResult(config, records, stats)


@dataclass(frozen=True)
class PredictionRow:
    c: float
    n: float
    eps1: float
    q: int
    l2_real: float
    l2: int
    lq_real: float
    lq: int
    ratio: float
    order_terms: str = "dropped"


def predict(c: float, n: float, eps1: float, q: int) -> PredictionRow:
    """Leading-term binary and q-ary codelengths and their ratio ``2/q``."""
    lq_real = core.codelength_qary_real(c, n, eps1, q)
    l2_real = core.codelength_qary_real(c, n, eps1, 2)
    return PredictionRow(
        c=c,
        n=n,
        eps1=eps1,
        q=q,
        l2_real=l2_real,
        l2=core.codelength_static(c, n, eps1, core.D_LEN),
        lq_real=lq_real,
        lq=math.ceil(lq_real),
        ratio=2 / q,
    )


# -- export -----------------------------------------------------------------

FORMATS = ("jsonl", "json-lines", "csv")
_KINDS = {cls.SCHEMA: cls for cls in (RunRecord, AggregateStats)}


def _encode(value, kind) -> object:
    if kind is tuple:
        return list(value)
    return value


def _decode(value, kind):
    if kind is tuple:
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(";")) if value else ()
        return tuple(int(v) for v in value)
    return kind(value)


def export(items: RunRecord | AggregateStats | Iterable, path: str | Path, fmt: str = "jsonl", kind=None) -> Path:
    """Write records or stats with a versioned schema header.

    ``kind`` names the item class for empty inputs (defaults to RunRecord).
    """
    if isinstance(items, (RunRecord, AggregateStats)):
        items = [items]
    items = list(items)
    cls = kind or (type(items[0]) if items else RunRecord)
    if fmt not in FORMATS:
        raise ParameterError(f"unknown format {fmt!r}")
    names = [name for name, _ in cls.COLUMNS]
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if fmt == "csv":
                fh.write(f"#schema={cls.SCHEMA};version={SCHEMA_VERSION}\n")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(names)
                for it in items:
                    row = []
                    for name, k in cls.COLUMNS:
                        v = getattr(it, name)
                        row.append(";".join(map(str, v)) if k is tuple else repr(v) if k is float else v)
                    writer.writerow(row)
            else:
                header = {"schema": cls.SCHEMA, "version": SCHEMA_VERSION, "columns": names}
                fh.write(json.dumps(header) + "\n")
                for it in items:
                    row = {name: _encode(getattr(it, name), k) for name, k in cls.COLUMNS}
                    fh.write(json.dumps(row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def load(path: str | Path) -> list:
    """Read a file written by :func:`export`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise ParameterError(f"{path} is empty")
    if lines[0].startswith("#schema="):
        meta = dict(part.split("=", 1) for part in lines[0][1:].split(";"))
        cls = _schema_class(meta["schema"], int(meta["version"]))
        rows = list(csv.DictReader(lines[1:]))
    else:
        header = json.loads(lines[0])
        cls = _schema_class(header["schema"], header["version"])
        rows = [json.loads(line) for line in lines[1:] if line.strip()]
    return [cls(**{name: _decode(row[name], k) for name, k in cls.COLUMNS}) for row in rows]


def _schema_class(schema: str, version: int):
    if schema not in _KINDS or version != SCHEMA_VERSION:
        raise ParameterError(f"unsupported schema {schema} v{version}")
    return _KINDS[schema]

