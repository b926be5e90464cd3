"""Time base, arrivals, queue dynamics and capacity arithmetic.

Slot ``t`` is bounded by the epochs ``t`` and ``t+1``.  Arrivals are embedded
at the slot boundary ``t`` (so the backlog Q(t), read at ``t+``, already
includes them), scheduling decisions happen at ``t+`` and at most one departure
occurs at ``(t+1)-``.  A packet that arrives at ``t`` and departs in slot ``d``
has spent ``d - t + 1`` slots in the system, so every delay is at least one
slot.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DATA = 0
ALARM = 1

# Substream kinds.  One independent stream per (queue, kind) so that enabling
# an extra noise source (alarm splitting, fading, CCA errors, backoffs) never
# perturbs the arrival sample paths of a paired run.
S_ARRIVAL = 0
S_CLASS = 1
S_FADING = 2
S_CCA = 3
S_BACKOFF = 4
_QUEUE_KINDS = 8
_NETWORK_BASE = 1 << 20  # network-wide streams live above any queue index


class Rng:
    """Deterministic substream factory for one simulation run.

    Substreams are derived from ``SeedSequence(seed, spawn_key=(stream_id,))``,
    so identical (seed, stream layout) gives a bit-identical trace.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream_id(self, kind: int, queue: int | None = None) -> int:
        if queue is None:
            return _NETWORK_BASE + kind
        return queue * _QUEUE_KINDS + kind

    def generator(self, kind: int, queue: int | None = None) -> np.random.Generator:
        key = self.stream_id(kind, queue)
        seq = np.random.SeedSequence(self.seed, spawn_key=(key,))
        return np.random.Generator(np.random.PCG64(seq))


class Uniforms:
    """Buffered uniform(0,1) draws from one substream (cheap scalar access)."""

    __slots__ = ("gen", "block", "buf", "pos")

    def __init__(self, gen: np.random.Generator, block: int = 4096):
        self.gen = gen
        self.block = block
        self.buf = gen.random(block)
        self.pos = 0

    def take(self) -> float:
        pos = self.pos
        if pos == self.block:
            self.buf = self.gen.random(self.block)
            pos = 0
        self.pos = pos + 1
        return self.buf[pos]


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-queue Bernoulli arrival rates and the alarm split fractions."""

    rates: tuple
    alarm_fraction: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        alarm = tuple(float(a) for a in self.alarm_fraction)
        if len(rates) == 0:
            raise ValueError("need at least one queue")
        if len(alarm) != len(rates):
            raise ValueError("alarm_fraction length must match rates")
        for r in rates:
            if not (0.0 <= r < 1.0):
                raise ValueError(f"arrival rate {r} outside [0, 1)")
        for a in alarm:
            if not (0.0 <= a <= 1.0):
                raise ValueError(f"alarm fraction {a} outside [0, 1]")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "alarm_fraction", alarm)

    @classmethod
    def uniform(cls, n: int, rate: float, alarm: float = 0.0) -> "ArrivalSpec":
        return cls(rates=(rate,) * n, alarm_fraction=(alarm,) * n)

    @classmethod
    def of(cls, rates, alarm=None) -> "ArrivalSpec":
        rates = tuple(rates)
        if alarm is None:
            alarm = (0.0,) * len(rates)
        elif isinstance(alarm, (int, float)):
            alarm = (float(alarm),) * len(rates)
        return cls(rates=rates, alarm_fraction=tuple(alarm))

    @property
    def n(self) -> int:
        return len(self.rates)

    @property
    def total(self) -> float:
        return sum(self.rates)

    @property
    def symmetric(self) -> bool:
        return all(r == self.rates[0] for r in self.rates)

    @property
    def has_alarms(self) -> bool:
        return any(a > 0.0 for a in self.alarm_fraction)


@dataclass(frozen=True)
class Packet:
    """One packet: where and when it entered, and its traffic class."""

    arrival_slot: int
    queue_id: int
    klass: int = DATA

    def delay(self, departure_slot: int) -> int:
        d = departure_slot - self.arrival_slot + 1
        if d < 1:
            raise ValueError("departure before arrival")
        return d


class QueueState:
    """FIFO backlog of one queue, data and alarm packets kept separately."""

    __slots__ = ("data", "alarm")

    def __init__(self):
        self.data = deque()
        self.alarm = deque()

    @property
    def q(self) -> int:
        return len(self.data) + len(self.alarm)

    def push(self, arrival_slot: int, klass: int = DATA) -> None:
        (self.alarm if klass == ALARM else self.data).append(arrival_slot)


def apply_service(state: QueueState, scheduled: bool, channel_success: bool,
                  klass: int = DATA):
    """End-of-slot service: pop the head packet iff scheduled, successful and
    nonempty.  A failed (fading) transmission leaves the packet at the head.

    Returns the departed packet's arrival slot, or None.
    """
    if not (scheduled and channel_success):
        return None
    fifo = state.alarm if klass == ALARM else state.data
    if not fifo:
        return None
    return fifo.popleft()


@dataclass(frozen=True)
class CapacityReport:
    load: float
    interior: bool
    in_leq_region: bool


def capacity_check(spec: ArrivalSpec, fading=None) -> CapacityReport:
    """Total offered load and capacity-region membership.

    Without fading the load is sum(rate_i) and the region requires it to be
    strictly below 1.  With per-queue success probabilities p_i the load is
    sum(rate_i / p_i).  The LEQ region additionally requires min rate_i > 0.
    """
    if fading is None:
        load = sum(spec.rates)
    else:
        fading = tuple(float(p) for p in fading)
        if len(fading) != spec.n:
            raise ValueError("fading vector length must match rates")
        load = 0.0
        for lam, p in zip(spec.rates, fading):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"success probability {p} outside [0, 1]")
            if p == 0.0:
                if lam > 0.0:
                    raise ValueError("queue with zero success probability and positive rate is unserviceable")
                continue
            load += lam / p
    interior = load < 1.0
    return CapacityReport(load=load,
                          interior=interior,
                          in_leq_region=interior and min(spec.rates) > 0.0)


class ArrivalProcess:
    """Pregenerated arrival events for one run, merged in slot order.

    Arrival positions for queue i come from its own substream (one uniform per
    slot); the alarm/data class of the k-th arrival comes from the k-th draw of
    the queue's class substream, so changing the alarm fraction never moves an
    arrival.
    """

    def __init__(self, spec: ArrivalSpec, rng: Rng, horizon: int):
        self.spec = spec
        self.horizon = int(horizon)
        slots_parts, queues_parts, alarm_parts = [], [], []
        for i, lam in enumerate(spec.rates):
            gen = rng.generator(S_ARRIVAL, i)
            hits = np.flatnonzero(gen.random(self.horizon) < lam)
            slots_parts.append(hits)
            queues_parts.append(np.full(hits.shape, i, dtype=np.int64))
            alpha = spec.alarm_fraction[i]
            if alpha > 0.0:
                cgen = rng.generator(S_CLASS, i)
                alarm_parts.append(cgen.random(hits.shape[0]) < alpha)
            else:
                alarm_parts.append(np.zeros(hits.shape[0], dtype=bool))
        slots = np.concatenate(slots_parts) if slots_parts else np.empty(0, dtype=np.int64)
        order = np.argsort(slots, kind="stable")
        self.slots = slots[order]
        self.queues = np.concatenate(queues_parts)[order]
        self.alarms = np.concatenate(alarm_parts)[order]

    def __len__(self) -> int:
        return self.slots.shape[0]

    def per_queue_counts(self) -> list:
        counts = [0] * self.spec.n
        for q in self.queues:
            counts[q] += 1
        return counts


def step_arrivals(spec: ArrivalSpec, rng: Rng, t: int):
    """Arrival symbols for slot ``t``: one of None/DATA/ALARM per queue.

    Reference surface for tests and step-wise use; draws the same substreams
    as ArrivalProcess, so both views of a run agree bit-for-bit.
    """
    out = []
    for i, lam in enumerate(spec.rates):
        gen = rng.generator(S_ARRIVAL, i)
        draws = gen.random(t + 1)
        if draws[t] >= lam:
            out.append(None)
            continue
        alpha = spec.alarm_fraction[i]
        if alpha <= 0.0:
            out.append(DATA)
            continue
        k = int(np.count_nonzero(draws[:t] < lam))  # arrivals before t
        cgen = rng.generator(S_CLASS, i)
        out.append(ALARM if cgen.random(k + 1)[k] < alpha else DATA)
    return out


def initial_age_offsets(n: int) -> list:
    """Encoded initial ages: queue k (0-based) starts with age k+1.

    Ages are stored as last-transmission slots with V_i(t) = t - 1 - last[i];
    the conventional start V = (1, 2, ..., N) maps to last[i] = -2 - i.
    """
    return [-2 - i for i in range(n)]
