import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slotmac import metrics, policies
from slotmac.core import ALARM, DATA, ArrivalSpec
from slotmac.frame import FrameLayout, Simulation
from slotmac.metrics import (MetricsAccumulator, backlog_cdf,
                             channel_utilization, fairness_index,
                             little_law_delay, mean_delay, utilization_two_ways)

from conftest import run_sim


class TestMeanDelay:
    def test_same_slot_departure_is_one_slot(self):
        acc = MetricsAccumulator(n=1, rates=(0.1,))
        acc.on_departure(0, DATA, 1)
        assert mean_delay(acc) == 1.0

    def test_empty_run_raises(self):
        acc = MetricsAccumulator(n=1, rates=(0.1,))
        with pytest.raises(ValueError):
            mean_delay(acc)

    def test_little_law_agreement_on_stable_run(self):
        spec = ArrivalSpec.uniform(6, 0.12)
        _, acc = run_sim(policies.OraclePolicy(), spec, seed=2,
                         horizon=400_000, warmup=10_000)
        direct = mean_delay(acc)
        little = little_law_delay(acc)
        assert abs(direct - little) / direct < 0.02


class TestFairnessIndex:
    def test_equal_shares_give_one(self):
        assert fairness_index([3, 3, 3, 3]) == pytest.approx(1.0)

    def test_single_nonzero_gives_one_over_n(self):
        assert fairness_index([0, 5, 0, 0]) == pytest.approx(0.25)

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            fairness_index([0.0, 0.0])

    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=2,
                    max_size=40).filter(lambda xs: max(xs, default=0) > 1e-6))
    @settings(max_examples=300, deadline=None)
    def test_bounds(self, xs):
        j = fairness_index(xs)
        assert 1.0 / len(xs) - 1e-9 <= j <= 1.0 + 1e-9

    def test_tdma_period_oscillation_converging_to_one(self):
        spec = ArrivalSpec.uniform(30, 0.03)
        _, acc = run_sim(policies.TdmaPolicy(), spec, seed=1, horizon=48_000,
                         warmup=30_000, collect_jain_trace=True)
        jt = acc.jain_trace
        n = 30
        # exactly 1 at whole frames, below 1 inside every frame
        for k in (1, 2, 10, 100):
            assert jt[k * n - 1] == pytest.approx(1.0)
        for k in (1, 2, 10, 100):
            assert min(jt[k * n: (k + 1) * n - 1]) < 1.0
        # the within-frame dips shrink as the window grows
        early_dip = min(jt[n: 2 * n])
        late_dip = min(jt[400 * n: 401 * n])
        assert late_dip > early_dip
        assert late_dip > 0.99


class TestUtilization:
    def test_oracle_utilization_is_one(self):
        spec = ArrivalSpec.uniform(4, 0.2)
        _, acc = run_sim(policies.OraclePolicy(), spec, seed=3,
                         horizon=50_000, warmup=1_000)
        assert channel_utilization(acc) == pytest.approx(1.0)

    def test_always_idle_utilization_is_zero(self):
        spec = ArrivalSpec.uniform(3, 0.1)
        _, acc = run_sim(policies.NullPolicy(), spec, seed=3,
                         horizon=20_000, warmup=1_000)
        assert channel_utilization(acc) == 0.0

    def test_two_estimates_agree_on_ergodic_run(self):
        spec = ArrivalSpec.uniform(5, 0.15)
        _, acc = run_sim(policies.QzmacPolicy(), spec,
                         layout=FrameLayout(0, 3, 7), seed=5,
                         horizon=300_000, warmup=20_000)
        full, late = utilization_two_ways(acc)
        assert abs(full - late) < 0.01


class TestBacklogCdf:
    def test_all_zero_trace(self):
        acc = MetricsAccumulator(n=2, rates=(0.0, 0.0))
        for _ in range(100):
            acc.on_slot(0, False)
        cdf = backlog_cdf(acc)
        assert cdf.at(0) == 1.0
        assert cdf.support_max == 0

    def test_step_shape_and_support(self):
        acc = MetricsAccumulator(n=2, rates=(0.1, 0.1))
        for b in (0, 0, 1, 2, 2, 5):
            acc.on_slot(b, False)
        cdf = backlog_cdf(acc)
        assert cdf.at(-1) == 0.0
        assert cdf.at(0) == pytest.approx(2 / 6)
        assert cdf.at(4) == pytest.approx(5 / 6)
        assert cdf.support_max == 5

    def test_empty_trace_rejected(self):
        acc = MetricsAccumulator(n=2, rates=(0.1, 0.1))
        with pytest.raises(ValueError):
            backlog_cdf(acc)


class TestMerge:
    def test_merge_combines_counters(self):
        spec = ArrivalSpec.uniform(3, 0.2)
        _, a = run_sim(policies.OraclePolicy(), spec, seed=1, horizon=20_000,
                       warmup=1_000)
        _, b = run_sim(policies.OraclePolicy(), spec, seed=2, horizon=20_000,
                       warmup=1_000)
        total = a.departures + b.departures
        sum_delay = sum(a.delay_sum) + sum(b.delay_sum)
        a.merge(b)
        assert a.departures == total
        assert mean_delay(a) == pytest.approx(sum_delay / total)
