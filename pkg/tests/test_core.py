import math

import numpy as np
import pytest

from slotmac import core, policies
from slotmac.core import (ALARM, DATA, ArrivalProcess, ArrivalSpec, Packet,
                          QueueState, Rng, apply_service, capacity_check,
                          step_arrivals)
from slotmac.frame import FrameLayout, Simulation

from conftest import binomial_band, run_sim


class TestArrivalSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ArrivalSpec.uniform(3, 1.0)
        with pytest.raises(ValueError):
            ArrivalSpec.uniform(3, -0.1)
        with pytest.raises(ValueError):
            ArrivalSpec.of([0.1, 0.2], alarm=[0.5])
        with pytest.raises(ValueError):
            ArrivalSpec.of([0.1], alarm=[1.5])

    def test_symmetric_flag(self):
        assert ArrivalSpec.uniform(4, 0.1).symmetric
        assert not ArrivalSpec.of([0.1, 0.2]).symmetric


class TestArrivals:
    def test_zero_rate_never_arrives(self):
        spec = ArrivalSpec.uniform(2, 0.0)
        proc = ArrivalProcess(spec, Rng(1), 10_000)
        assert len(proc) == 0
        assert step_arrivals(spec, Rng(1), 5) == [None, None]

    def test_alarm_fraction_one_makes_every_arrival_an_alarm(self):
        spec = ArrivalSpec.of([0.5], alarm=[1.0])
        proc = ArrivalProcess(spec, Rng(2), 5_000)
        assert len(proc) > 0
        assert proc.alarms.all()

    def test_empirical_rate_within_three_sigma(self):
        spec = ArrivalSpec.of([0.03, 0.5, 0.97])
        horizon = 1_000_000
        proc = ArrivalProcess(spec, Rng(3), horizon)
        counts = proc.per_queue_counts()
        for lam, c in zip(spec.rates, counts):
            assert abs(c / horizon - lam) < binomial_band(horizon, lam)

    def test_step_arrivals_agrees_with_pregenerated_process(self):
        spec = ArrivalSpec.of([0.4, 0.2], alarm=[0.5, 0.0])
        rng = Rng(17)
        proc = ArrivalProcess(spec, rng, 60)
        by_slot = {}
        for s, q, a in zip(proc.slots, proc.queues, proc.alarms):
            by_slot.setdefault(int(s), {})[int(q)] = ALARM if a else DATA
        for t in range(60):
            want = [by_slot.get(t, {}).get(i) for i in range(2)]
            assert step_arrivals(spec, rng, t) == want

    def test_alarm_split_does_not_move_arrivals(self):
        plain = ArrivalProcess(ArrivalSpec.uniform(3, 0.2), Rng(5), 20_000)
        split = ArrivalProcess(ArrivalSpec.uniform(3, 0.2, alarm=0.4), Rng(5), 20_000)
        assert np.array_equal(plain.slots, split.slots)
        assert np.array_equal(plain.queues, split.queues)


class TestService:
    def test_departure_decrements(self):
        q = QueueState()
        for t in (0, 1, 2):
            q.push(t)
        assert apply_service(q, True, True) == 0
        assert q.q == 2

    def test_empty_queue_floors_at_zero(self):
        q = QueueState()
        assert apply_service(q, True, True) is None
        assert q.q == 0

    def test_fade_failure_keeps_head_of_line(self):
        q = QueueState()
        for t in (0, 1, 2):
            q.push(t)
        assert apply_service(q, True, False) is None
        assert q.q == 3
        assert apply_service(q, True, True) == 0  # same head departs next

    def test_packet_delay_embedding(self):
        pkt = Packet(arrival_slot=7, queue_id=0)
        assert pkt.delay(7) == 1
        with pytest.raises(ValueError):
            pkt.delay(5)


class TestCapacity:
    def test_interior_near_boundary(self):
        rep = capacity_check(ArrivalSpec.uniform(30, 0.033))
        assert math.isclose(rep.load, 0.99)
        assert rep.interior and rep.in_leq_region

    def test_boundary_not_interior(self):
        rep = capacity_check(ArrivalSpec.of([0.5, 0.5]))
        assert math.isclose(rep.load, 1.0)
        assert not rep.interior

    def test_leq_region_needs_positive_min_rate(self):
        rep = capacity_check(ArrivalSpec.of([0.3, 0.0]))
        assert rep.interior and not rep.in_leq_region

    def test_fading_load_and_unserviceable_queue(self):
        rep = capacity_check(ArrivalSpec.of([0.3, 0.2]), fading=[0.5, 1.0])
        assert math.isclose(rep.load, 0.8)
        with pytest.raises(ValueError):
            capacity_check(ArrivalSpec.of([0.3]), fading=[0.0])


class TestDeterminismAndConservation:
    def test_identical_seed_gives_identical_trace(self):
        spec = ArrivalSpec.uniform(4, 0.2)
        traces = []
        for _ in range(2):
            sim, _ = run_sim(policies.QzmacPolicy(), spec,
                             layout=FrameLayout(0, 3, 5), seed=99,
                             horizon=5_000, warmup=0, record_trace=True)
            traces.append([(o.transmitter, o.outcome, o.minislots_consumed)
                           for o in sim.trace])
        assert traces[0] == traces[1]

    def test_conservation_per_queue(self):
        spec = ArrivalSpec.of([0.15, 0.3, 0.05])
        sim, _ = run_sim(policies.OraclePolicy(), spec, seed=4,
                         horizon=30_000, warmup=0)
        arrivals = sim.arrivals.per_queue_counts()
        for i in range(spec.n):
            assert arrivals[i] - sim.dep_counts[i] == sim.q_len[i]
        assert sum(arrivals) - sum(sim.dep_counts) == sim.total_backlog

    def test_enabling_noise_sources_keeps_arrival_paths(self):
        spec = ArrivalSpec.uniform(3, 0.25)
        base = ArrivalProcess(spec, Rng(11), 10_000)
        # a run that also consumes fading, cca and backoff streams
        sim, _ = run_sim(policies.QzmacPolicy(), spec,
                         layout=FrameLayout(0, 3, 4), seed=11,
                         horizon=10_000, warmup=0, fading=[0.9, 0.9, 0.9])
        assert np.array_equal(base.slots, sim.arrivals.slots)
        assert np.array_equal(base.queues, sim.arrivals.queues)
