"""Command line entry point: simulate, predict, replay-example1, export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from dyntrace import harness
from dyntrace.adversary import AttackStrategy
from dyntrace.errors import InvariantViolation, ParameterError, ProtocolViolation
from dyntrace.example1 import replay_example1

_FLAG_KEYS = ("c", "n", "eps1", "eps2", "q", "d_len", "d_thr", "d_cut", "strategy", "trials",
              "seed", "coalition_size", "out", "format")


def _build_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text()))
    for key in _FLAG_KEYS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.check:
        values["check_invariants"] = True
    missing = [k for k in ("c", "n", "eps1", "eps2") if k not in values]
    if missing:
        raise ParameterError(f"missing parameters: {', '.join(missing)}")
    return harness.ExperimentConfig.from_dict(values)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _build_config(args)
    result = harness.run_experiment(config, workers=args.workers)
    if args.trace:
        events: list[dict] = []
        t = args.trace_trial
        harness.run_trial(config, harness.trial_seed(config.master_seed, t), t, trace=events)
        with open(args.trace, "w") as fh:
            fh.write(json.dumps({"schema": "dyntrace.trace", "version": harness.SCHEMA_VERSION,
                                 "trial": t}) + "\n")
            for ev in events:
                fh.write(json.dumps(ev) + "\n")
    if args.stats_out:
        harness.export(result.stats, args.stats_out, config.format)
    print(json.dumps({"config": config.to_dict(), "stats": asdict(result.stats)}, indent=2))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    rows = [harness.predict(args.c, args.n, args.eps1, q) for q in args.q]
    if args.json:
        for r in rows:
            print(json.dumps(asdict(r)))
        return 0
    print(f"{'q':>4} {'l_2':>10} {'l_q':>10} {'ratio':>8}   (leading terms, order terms dropped)")
    for r in rows:
        print(f"{r.q:>4} {r.l2:>10} {r.lq:>10} {r.ratio:>8.4f}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    report = replay_example1()
    print("\n".join(report.lines()))
    if args.verbose:
        for row in report.matrix:
            print(" ".join(row))
    return 0 if report.passed else 1


def cmd_export(args: argparse.Namespace) -> int:
    items = harness.load(args.input)
    kind = type(items[0]) if items else None
    harness.export(items, args.out, args.format, kind=kind)
    print(f"wrote {len(items)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyntrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--config", help="JSON file with experiment keys; flags override it")
    sim.add_argument("--c", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--eps1", type=float)
    sim.add_argument("--eps2", type=float)
    sim.add_argument("--q", type=int)
    sim.add_argument("--d-len", dest="d_len", type=float)
    sim.add_argument("--d-thr", dest="d_thr", type=float)
    sim.add_argument("--d-cut", dest="d_cut", type=float)
    sim.add_argument("--strategy", choices=[s.value for s in AttackStrategy])
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--coalition-size", dest="coalition_size", type=int)
    sim.add_argument("--out", help="per-trial records file")
    sim.add_argument("--format", choices=harness.FORMATS)
    sim.add_argument("--stats-out", help="aggregate statistics file")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--check", action="store_true", help="assert invariants inline")
    sim.add_argument("--trace", help="JSON-lines event trace of one trial")
    sim.add_argument("--trace-trial", type=int, default=0)
    sim.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("predict", help="leading-term codelength table")
    pr.add_argument("--c", type=float, required=True)
    pr.add_argument("--n", type=float, required=True)
    pr.add_argument("--eps1", type=float, required=True)
    pr.add_argument("--q", type=int, nargs="+", default=[2, 4, 8])
    pr.add_argument("--json", action="store_true")
    pr.set_defaults(func=cmd_predict)

    rp = sub.add_parser("replay-example1", help="replay the eight-user worked example")
    rp.add_argument("-v", "--verbose", action="store_true")
    rp.set_defaults(func=cmd_replay)

    ex = sub.add_parser("export", help="convert an exported file to another format")
    ex.add_argument("input")
    ex.add_argument("--out", required=True)
    ex.add_argument("--format", choices=harness.FORMATS, default="csv")
    ex.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvariantViolation, ProtocolViolation) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
