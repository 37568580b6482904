"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import time

import mpmath
import numpy as np
import pytest

from dyntrace import core, harness
from dyntrace.adversary import AttackStrategy
from dyntrace.conquer import group_capacity, split_users
from dyntrace.core import SchemeParams
from dyntrace.errors import InvariantViolation
from dyntrace.example1 import replay_example1
from dyntrace.harness import ExperimentConfig


def test_criterion_1_score_moments(report):
    start = time.perf_counter()
    delta = core.cutoff(3)
    ps = np.linspace(delta, 1 - delta, 1000)
    worst = 0.0
    for p in ps:
        for y in (0, 1):
            mean, var = core.score_moments(float(p), y)
            worst = max(worst, abs(mean), abs(var - 1))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1
    assert report(1, "score moments", ok, f"max error {worst:.2e}, {elapsed:.3f}s")


def test_criterion_2_example1_replay(report):
    start = time.perf_counter()
    rep = replay_example1()
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 1
    detail = f"{elapsed:.3f}s" if rep.passed else "; ".join(rep.failures)
    assert report(2, "example 1 replay", ok, detail)


def test_criterion_3_marking_condition(report):
    start = time.perf_counter()
    params = SchemeParams(c=3, n=100, eps1=0.05, eps2=0.1, q=4)
    per_strategy = 2 * 10**4
    segments = violations = 0
    for s, strategy in enumerate(AttackStrategy):
        done = trial = 0
        cfg = ExperimentConfig(params, strategy=strategy.value, check_invariants=True)
        while done < per_strategy:
            try:
                rec = harness.run_trial(cfg, harness.trial_seed(300 + s, trial), trial)
                done += rec.segments_used
            except InvariantViolation:
                violations += 1
            trial += 1
        segments += done
    elapsed = time.perf_counter() - start
    ok = violations == 0 and segments >= 10**5 and elapsed < 30
    assert report(3, "marking condition", ok, f"{violations} violations in {segments} segments, {elapsed:.1f}s")


def test_criterion_4_split_bound(report):
    start = time.perf_counter()
    n, c, eps2, splits = 10**4, 100, 0.1, 10**5
    ids = np.arange(n)
    rng = np.random.default_rng(4)
    details, ok = [], True
    for k in (2, 4):
        cap = group_capacity(c, k, eps2)
        over = 0
        for _ in range(splits):
            groups = split_users(ids, k, rng).groups
            # Colluders are ids 0..c-1 and groups are sorted.
            if max(int(np.searchsorted(g, c)) for g in groups) > cap:
                over += 1
        hi = harness.wilson_interval(over, splits)[1]
        ok &= over / splits <= eps2 / 2 and hi <= eps2 / 2 + 0.01
        details.append(f"k={k} cap={cap} rate={over / splits:.5f} upper={hi:.5f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    assert report(4, "split bound", ok, f"{'; '.join(details)}, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_5_end_to_end_guarantees(report):
    details, ok = [], True
    for q in (2, 4):
        params = SchemeParams(c=3, n=100, eps1=0.05, eps2=0.1, q=q)
        for strategy in ("interleave-uniform", "majority-vote"):
            cfg = ExperimentConfig(params, strategy=strategy, trials=1000, master_seed=500 + q)
            res = harness.run_experiment(cfg)
            s = res.stats
            within = all(r.segments_used <= r.budget for r in res.records)
            ok &= s.eps1_hi <= 0.05 and s.eps2_hi <= 0.1 and within
            details.append(
                f"q={q} {strategy}: eps1={s.eps1_hat:.3f} (hi {s.eps1_hi:.3f}) "
                f"eps2={s.eps2_hat:.3f} (hi {s.eps2_hi:.3f}) within budget={within}"
            )
    assert report(5, "end-to-end guarantees", ok, "; ".join(details))


@pytest.mark.slow
def test_criterion_6_alphabet_tradeoff(report):
    means = {}
    for q in (2, 4):
        params = SchemeParams(c=8, n=1000, eps1=0.01, eps2=0.1, q=q)
        cfg = ExperimentConfig(params, trials=500, master_seed=600 + q)
        means[q] = harness.run_experiment(cfg).stats.segments_mean
    ratio = means[4] / means[2]
    ok = 0.35 <= ratio <= 0.75
    assert report(6, "alphabet tradeoff", ok, f"mean segments q=2 {means[2]:.1f}, q=4 {means[4]:.1f}, ratio {ratio:.4f}")


def test_criterion_7_predictor_consistency(report):
    mpmath.mp.dps = 50
    worst = 0.0
    for c in (1, 3, 8, 10, 57.5, 1000):
        for n in (10, 1000, 10**6, 2.5e9):
            for eps1 in (1e-6, 0.01, 0.3):
                for q in (2, 4, 6, 8, 16, 64):
                    row = harness.predict(c, n, eps1, q)
                    ln = mpmath.log(mpmath.mpf(n) / mpmath.mpf(eps1))
                    lq = mpmath.pi**2 * mpmath.mpf(c) ** 2 / q * ln
                    l2 = mpmath.pi**2 * mpmath.mpf(c) ** 2 / 2 * ln
                    worst = max(worst, float(abs(row.lq_real - lq) / lq), float(abs(row.l2_real - l2) / l2))
                    if q == 2 and (row.ratio != 1 or row.lq_real != row.l2_real or row.lq != row.l2):
                        worst = float("inf")
    ok = worst <= 1e-9
    assert report(7, "predictor consistency", ok, f"max relative error {worst:.2e}")


def test_criterion_8_determinism(tmp_path, report):
    params = SchemeParams(c=3, n=100, eps1=0.05, eps2=0.1, q=4)
    ok = True
    for fmt in ("jsonl", "csv"):
        blobs = []
        for workers in (1, 8):
            path = tmp_path / f"w{workers}.{fmt}"
            cfg = ExperimentConfig(params, strategy="majority-vote", trials=40, master_seed=8, out=str(path), format=fmt)
            harness.run_experiment(cfg, workers=workers)
            blobs.append(path.read_bytes())
        ok &= blobs[0] == blobs[1]
    assert report(8, "determinism", ok, "workers 1 vs 8, jsonl and csv")


@pytest.mark.slow
def test_criterion_9_structural_invariants(report):
    rng = np.random.default_rng(9)
    strategies = [s.value for s in AttackStrategy]
    violations, runs = [], 1000
    for run in range(runs):
        k = int(rng.integers(1, 4))
        c = int(rng.integers(1, 5))
        n = int(rng.integers(max(c + 1, 2 * k), 60))
        params = SchemeParams(c=c, n=n, eps1=float(rng.uniform(0.05, 0.3)), eps2=float(rng.uniform(0.05, 0.3)), q=2 * k)
        cfg = ExperimentConfig(
            params,
            strategy=strategies[run % len(strategies)],
            coalition_size=int(rng.integers(0, c + 1)),
            check_invariants=True,
        )
        try:
            rec = harness.run_trial(cfg, int(rng.integers(2**63)), run)
            if rec.segments_used > rec.budget:
                violations.append(f"run {run}: budget")
        except InvariantViolation as exc:
            violations.append(f"run {run}: {exc}")
    ok = not violations
    assert report(9, "structural invariants", ok, f"{len(violations)} violations in {runs} runs")
