import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dyntrace import core
from dyntrace.conquer import (
    GroupAssignment,
    Orchestrator,
    Status,
    alpha_k,
    derive_group_params,
    group_capacity,
    new_orchestrator,
    split_users,
)
from dyntrace.core import DISCONNECTED, LAMBDA, SchemeParams
from dyntrace.errors import ParameterError, ProtocolViolation
from dyntrace.tracer import GroupParams, TracerState


class TestAlpha:
    def test_two_groups(self):
        assert alpha_k(2, 0.5) == pytest.approx(math.sqrt(math.log(8)), rel=1e-15)
        assert alpha_k(2, 0.5) == pytest.approx(1.442027, abs=1e-6)

    @given(st.floats(1e-9, 0.999))
    def test_reduces_to_two_group_constant(self, eps2):
        assert alpha_k(2, eps2) == pytest.approx(math.sqrt(math.log(4 / eps2)), rel=1e-12)

    @given(st.integers(1, 64), st.floats(1e-6, 0.99), st.integers(1, 500))
    def test_tail_width(self, k, eps2, c):
        a = alpha_k(k, eps2) * math.sqrt(c / k)
        assert a == pytest.approx(math.sqrt(c / 2 * math.log(2 * k / eps2)), rel=1e-12)

    def test_single_group_never_underprovisions(self):
        for c in (1, 3, 10, 100):
            for eps2 in (0.01, 0.5, 0.99):
                assert group_capacity(c, 1, eps2) >= c
                expected = c + math.sqrt(c / 2 * math.log(2 / eps2))
                assert group_capacity(c, 1, eps2) == math.ceil(expected)

    def test_capacity_values(self):
        assert group_capacity(100, 2, 0.5) == 61
        assert 2 <= group_capacity(4, 2, 0.999) <= 4

    def test_bad_args(self):
        with pytest.raises(ParameterError):
            alpha_k(0, 0.1)
        with pytest.raises(ParameterError):
            alpha_k(2, 1.0)


class TestSplit:
    def test_single_group(self):
        ga = split_users(range(10), 1, np.random.default_rng(0))
        assert ga.k == 1 and ga.groups[0].tolist() == list(range(10))

    def test_two_groups_of_four(self):
        ga = split_users(range(1, 9), 2, np.random.default_rng(0))
        assert [g.size for g in ga.groups] == [4, 4]
        assert sorted(np.concatenate(ga.groups).tolist()) == list(range(1, 9))
        assert not set(ga.groups[0]) & set(ga.groups[1])

    def test_too_many_groups(self):
        with pytest.raises(ParameterError):
            split_users(range(3), 4, np.random.default_rng(0))

    @given(st.integers(1, 200), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_near_equal_partition(self, n, k, seed):
        k = min(k, n)
        ga = split_users(range(n), k, np.random.default_rng(seed))
        sizes = [g.size for g in ga.groups]
        assert max(sizes) - min(sizes) <= 1
        assert sorted(np.concatenate(ga.groups).tolist()) == list(range(n))

    def test_deterministic(self):
        a = split_users(range(50), 3, np.random.default_rng(4))
        b = split_users(range(50), 3, np.random.default_rng(4))
        assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))

    def test_colluder_count_is_hypergeometric(self):
        # Oracle: exact hypergeometric pmf of the group-1 colluder count.
        n, c, trials = 40, 10, 20000
        rng = np.random.default_rng(8)
        counts = np.zeros(c + 1)
        for _ in range(trials):
            g = split_users(range(n), 2, rng).groups[0]
            counts[int(np.sum(g < c))] += 1
        pmf = stats.hypergeom(n, c, n // 2).pmf(np.arange(c + 1))
        keep = pmf * trials >= 5
        chi2 = np.sum((counts[keep] - trials * pmf[keep]) ** 2 / (trials * pmf[keep]))
        assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-4


class TestDerive:
    def test_two_groups(self):
        sp = SchemeParams(c=8, n=1000, eps1=0.01, eps2=0.1, q=4)
        gps = derive_group_params(sp)
        assert len(gps) == 2
        for t, gp in enumerate(gps):
            assert gp.eps1_g == pytest.approx(0.005)
            assert gp.eps2_g == pytest.approx(0.025)
            assert gp.n_g == 500
            assert gp.block == (2 * t, 2 * t + 1)
            assert gp.c_g == group_capacity(8, 2, 0.1)
        budget = sum(gp.len_g for gp in gps)
        assert budget == 2 * core.codelength_static(group_capacity(8, 2, 0.1), 500, 0.005, sp.d_len)

    def test_single_group(self):
        sp = SchemeParams(c=3, n=100, eps1=0.05, eps2=0.1, q=2)
        (gp,) = derive_group_params(sp)
        assert (gp.n_g, gp.eps1_g, gp.eps2_g) == (100, 0.05, 0.05)
        assert gp.c_g == group_capacity(3, 1, 0.1)

    def test_non_divisible_n_uses_ceiling(self):
        sp = SchemeParams(c=3, n=101, eps1=0.05, eps2=0.1, q=4)
        assert {gp.n_g for gp in derive_group_params(sp)} == {51}

    def test_q_mismatch(self):
        with pytest.raises(ParameterError):
            derive_group_params(SchemeParams(c=3, n=100, eps1=0.05, eps2=0.1, q=4), k=3)

    def test_blocks_partition_alphabet(self):
        sp = SchemeParams(c=20, n=1000, eps1=0.05, eps2=0.1, q=10)
        syms = sorted(s for gp in derive_group_params(sp) for s in gp.block)
        assert syms == list(range(10))


def small_orchestrator(len_g=(3, 3)):
    groups = (np.array([0, 1, 2]), np.array([3, 4, 5]))
    tracers = []
    for t, (g, ell) in enumerate(zip(groups, len_g)):
        gp = GroupParams(2, 3, 0.1, 0.1, (2 * t, 2 * t + 1), ell, math.inf, 0.1)
        tracers.append(TracerState(gp, g, np.random.default_rng(t)))
    return Orchestrator(GroupAssignment(groups), tracers)


class TestOrchestrator:
    def test_fresh(self):
        orch = small_orchestrator()
        assert orch.run_status() is Status.RUNNING
        assert orch.budget == 6 and orch.pointers == (1, 1)

    def test_no_lambda_while_all_groups_run(self):
        a = small_orchestrator().next_segment()
        assert np.all(a[:3] >= 0) and np.all(a[:3] <= 1)
        assert np.all(a[3:] >= 2) and np.all(a[3:] <= 3)

    def test_finished_group_gets_lambda_and_dashes(self):
        orch = small_orchestrator(len_g=(3, 1))
        a = orch.next_segment()
        orch.process_output(int(a[3]))
        orch.tracers[1].disconnect([4])
        a = orch.next_segment()
        assert a[3] == LAMBDA and a[5] == LAMBDA and a[4] == DISCONNECTED
        assert np.all(a[:3] >= 0)

    def test_routing_and_one_advance(self):
        orch = small_orchestrator()
        a = orch.next_segment()
        rep = orch.process_output(int(a[4]))
        assert rep.group == 1 and rep.pointer == 2 and orch.pointers == (1, 2)
        assert orch.global_position == 2
        orch.check_invariants()

    def test_lambda_fails_run(self):
        orch = small_orchestrator()
        orch.next_segment()
        rep = orch.process_output(LAMBDA)
        assert rep.status is Status.FAILED_LAMBDA and orch.status is Status.FAILED_LAMBDA
        with pytest.raises(ProtocolViolation):
            orch.next_segment()

    def test_bad_symbols(self):
        orch = small_orchestrator(len_g=(1, 3))
        orch.next_segment()
        with pytest.raises(ProtocolViolation):
            orch.process_output(7)
        orch.process_output(0)
        orch.next_segment()
        with pytest.raises(ProtocolViolation):
            orch.process_output(1)

    def test_output_requires_segment(self):
        with pytest.raises(ProtocolViolation):
            small_orchestrator().process_output(0)

    def test_exhaustion(self):
        orch = small_orchestrator(len_g=(1, 1))
        orch.next_segment()
        orch.process_output(0)
        a = orch.next_segment()
        rep = orch.process_output(int(a[3]))
        assert rep.status is Status.EXHAUSTED and rep.status_changed
        assert orch.global_position == orch.budget + 1
        assert np.all(orch.current_assignment() == LAMBDA)
        with pytest.raises(ProtocolViolation):
            orch.process_output(0)
        orch.mark_succeeded()
        assert orch.run_status() is Status.SUCCEEDED

    def test_partition_checked(self):
        gp = GroupParams(2, 3, 0.1, 0.1, (0, 1), 3, math.inf, 0.1)
        tr = TracerState(gp, [0, 1], np.random.default_rng(0))
        with pytest.raises(ParameterError):
            Orchestrator(GroupAssignment((np.array([0, 2]),)), [tr])

    def test_trace_events(self):
        sp = SchemeParams(c=2, n=20, eps1=0.1, eps2=0.1, q=4)
        orch = new_orchestrator(sp, 3, np.random.default_rng(0), record_trace=True)
        a = orch.next_segment()
        orch.process_output(int(a[0]))
        emit, out = orch.trace
        assert emit["event"] == "emit" and len(emit["digest"]) == 16
        assert out["event"] == "output" and out["segment"] == 1 and out["symbol"] == int(a[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6]))
def test_random_outputs_keep_invariants(seed, q):
    sp = SchemeParams(c=2, n=30, eps1=0.2, eps2=0.2, q=q)
    rng = np.random.default_rng(seed)
    orch = new_orchestrator(sp, seed, rng)
    steps = 0
    while orch.status is Status.RUNNING:
        a = orch.next_segment()
        live = np.flatnonzero(a >= 0)
        if live.size == 0:
            break
        orch.process_output(int(a[rng.choice(live)]))
        steps += 1
        orch.check_invariants()
        assert sum(p - 1 for p in orch.pointers) == steps
    assert steps <= orch.budget
