"""Minislot-resolution slot execution.

The engine owns the per-run state (queues, ages, incumbent/SU identities,
substreams, counters) and walks one slot at a time: arrivals at the boundary,
the policy's minislot decisions, at most one departure at the slot end, then
metrics.  Minislots only spend decision time; a successful transmission always
occupies the slot remainder and delivers exactly one packet, so delay is
accounted in whole slots.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import core
from .core import (ALARM, DATA, S_BACKOFF, S_CCA, S_FADING, ArrivalProcess,
                   QueueState, Rng, Uniforms, apply_service)
from .metrics import MetricsAccumulator

SUCCESS = "success"
COLLISION = "collision"
IDLE = "idle_wasted"
RESET = "reset_activity"
FADE_LOSS = "fade_loss"  # transmission attempted, lost on the uplink


@dataclass(frozen=True)
class FrameLayout:
    """Minislot budget at the head of every slot: alarm, polling, contention."""

    t_a: int = 0
    t_p: int = 1
    t_c: int = 0

    def __post_init__(self):
        if self.t_a not in (0, 1):
            raise ValueError("t_a must be 0 or 1")
        if self.t_p < 0 or self.t_c < 0:
            raise ValueError("t_p and t_c must be nonnegative")

    @property
    def total(self) -> int:
        return self.t_a + self.t_p + self.t_c

    def contention_support(self):
        """1-based minislot indices available to backoffs: the T_c slots after
        the alarm and polling minislots."""
        lo = self.t_a + self.t_p + 1
        return lo, lo + self.t_c - 1


@dataclass(frozen=True)
class CcaModel:
    """Clear-channel-assessment error model.

    Measurements put the false-alarm probability at zero and show at most one
    miss event per slot network-wide, so misses are injected against a one-per-
    slot budget.
    """

    p_miss: float = 0.0
    p_fa: float = 0.0
    max_misses_per_slot: int = 1

    def __post_init__(self):
        if self.p_fa != 0.0:
            raise ValueError("p_fa is fixed at 0")
        if not (0.0 <= self.p_miss <= 1.0):
            raise ValueError("p_miss outside [0, 1]")
        if self.max_misses_per_slot != 1:
            raise ValueError("at most one miss per slot is supported")


class MissBudget:
    """Per-slot injection budget for CCA misses."""

    __slots__ = ("remaining",)

    def __init__(self, remaining: int = 1):
        self.remaining = remaining


def cca_sense(true_busy: bool, model: CcaModel, u: float, budget: MissBudget) -> str:
    """One CCA: returns "busy" or "clear".

    A clear channel is always sensed clear (p_fa = 0); a busy channel is
    sensed clear with probability p_miss, but only while the slot's injection
    budget is unspent.
    """
    if not true_busy:
        return "clear"
    if budget.remaining > 0 and u < model.p_miss:
        budget.remaining -= 1
        return "clear"
    return "busy"


def sense_round(listeners, model: CcaModel, pick_u: float, miss_u: float,
                budget: MissBudget):
    """A busy-minislot sensing round over a set of listeners.

    At most one listener (uniformly chosen) can miss; everyone else senses the
    truth.  Returns the id of the listener that missed, or None.
    """
    if not listeners or model.p_miss <= 0.0 or budget.remaining <= 0:
        return None
    target = listeners[int(pick_u * len(listeners)) % len(listeners)]
    if cca_sense(True, model, miss_u, budget) == "clear":
        return target
    return None


def run_contention(contenders, t_c: int, draw):
    """Uniform backoff contention over ``t_c`` minislots.

    Each contender draws an independent uniform backoff; the unique minimum
    wins, a tie at the minimum is a collision (slot wasted), and an empty
    contender set is silent.  ``draw(q)`` must return a uniform(0,1) float
    from queue q's backoff stream.

    Returns (kind, winner, offset) where kind is one of "winner", "collision",
    "silent" and offset is the 0-based index of the resolving minislot within
    the contention window.
    """
    if not contenders:
        return "silent", None, None
    if t_c < 1:
        raise ValueError("contention requires t_c >= 1")
    best = t_c
    winner = None
    tied = False
    for q in contenders:
        u = int(draw(q) * t_c)
        if u >= t_c:
            u = t_c - 1
        if u < best:
            best, winner, tied = u, q, False
        elif u == best:
            tied = True
    if tied:
        return "collision", None, best
    return "winner", winner, best


@dataclass
class SlotOutcome:
    """What happened in one slot."""

    slot: int
    transmitter: int | None
    outcome: str
    minislots_consumed: int
    contention_entered: bool
    alarm_mode: bool
    scheduled: int | None = None


class Simulation:
    """One seeded run of a policy over a horizon of slots."""

    def __init__(self, policy, spec: core.ArrivalSpec, layout: FrameLayout | None = None,
                 seed: int = 0, horizon: int = 100_000, warmup: int = 10_000,
                 cca: CcaModel | None = None, fading=None,
                 count_empty_scheduled: bool = True,
                 collect_jain_trace: bool = False,
                 backlog_window: int = 0,
                 record_actions: bool = False,
                 probe_every: int = 0,
                 record_trace: bool = False,
                 initial_backlog=None):
        if warmup >= horizon:
            raise ValueError("horizon must exceed warmup")
        self.spec = spec
        self.n = spec.n
        self.layout = layout if layout is not None else FrameLayout(t_a=0, t_p=policy.min_tp, t_c=0)
        if self.layout.t_p < policy.min_tp:
            raise ValueError(
                f"policy {policy.kind} requires t_p >= {policy.min_tp}, got {self.layout.t_p}")
        if getattr(policy, "needs_alarm_minislot", False) and self.layout.t_a != 1:
            raise ValueError(f"policy {policy.kind} requires t_a = 1")
        self.policy = policy
        self.horizon = int(horizon)
        self.warmup = int(warmup)
        self.cca = cca if cca is not None else CcaModel()
        if fading is not None:
            fading = tuple(float(p) for p in fading)
            core.capacity_check(spec, fading)  # validates p_i against rates
        self.fading = fading
        self.count_empty_scheduled = count_empty_scheduled
        self.rng = Rng(seed)
        self.seed = seed

        n = self.n
        self.t = 0
        self.queues = [QueueState() for _ in range(n)]
        self.q_len = [0] * n
        self.alarm_len = [0] * n
        self.total_backlog = 0
        self.total_alarm = 0
        self.nonempty_mask = 0
        self.alarm_mask = 0
        self.last_tx = core.initial_age_offsets(n)
        self.last_obs = [0] * n
        self.dep_counts = [0] * n
        self.incumbent = 0
        self.su = 1 if n > 1 else 0
        if initial_backlog is not None:
            # preloaded state, treated as observed at start (drift probes);
            # the default convention remains Q(0) = A(0)
            for i, b in enumerate(initial_backlog):
                for _ in range(int(b)):
                    self.queues[i].data.append(-1)
                if b:
                    self.q_len[i] = int(b)
                    self.total_backlog += int(b)
                    self.nonempty_mask |= 1 << i
                    self.last_obs[i] = int(b)

        self.arrivals = ArrivalProcess(spec, self.rng, self.horizon)
        self._ev_ptr = 0
        self._backoff = [Uniforms(self.rng.generator(S_BACKOFF, i)) for i in range(n)]
        self._fade = ([Uniforms(self.rng.generator(S_FADING, i)) for i in range(n)]
                      if fading is not None else None)
        self._cca_miss = Uniforms(self.rng.generator(S_CCA)) if self.cca.p_miss > 0 else None
        self._cca_pick = Uniforms(self.rng.generator(S_CCA, 0)) if self.cca.p_miss > 0 else None

        self.acc = MetricsAccumulator(n=n, rates=spec.rates, warmup=self.warmup,
                                      collect_jain_trace=collect_jain_trace,
                                      backlog_window=backlog_window,
                                      expected_slots=self.horizon - self.warmup)
        self.record_actions = record_actions
        self.actions = [] if record_actions else None
        self.served_flags = [] if record_actions else None
        self.probe_every = probe_every
        self.probes = [] if probe_every else None
        self.record_trace = record_trace
        self.trace = [] if record_trace else None

        policy.bind(self)

    # -- state helpers -------------------------------------------------------

    def v_of(self, i: int) -> int:
        """Age of queue i at the start of the current slot."""
        return self.t - 1 - self.last_tx[i]

    def v_vector(self) -> list:
        t1 = self.t - 1
        return [t1 - l for l in self.last_tx]

    def argmax_age(self) -> int:
        """argmax_i V_i, ties broken by lowest queue id."""
        last = self.last_tx
        best = 0
        bl = last[0]
        for i in range(1, self.n):
            if last[i] < bl:
                bl = last[i]
                best = i
        return best

    def argmax_weighted_age(self, weights) -> int:
        """argmax_i weights_i * V_i, ties broken by lowest queue id."""
        t1 = self.t - 1
        last = self.last_tx
        best = 0
        bv = weights[0] * (t1 - last[0])
        for i in range(1, self.n):
            v = weights[i] * (t1 - last[i])
            if v > bv:
                bv = v
                best = i
        return best

    def rate_estimates(self) -> list:
        """Distributed estimates: departures observed so far over elapsed slots."""
        if self.t == 0:
            return [0.0] * self.n
        t = float(self.t)
        return [c / t for c in self.dep_counts]

    def contend(self, contenders):
        lo, hi = self.layout.contention_support()
        backoff = self._backoff
        return run_contention(contenders, self.layout.t_c, lambda q: backoff[q].take())

    def nonempty_queues(self) -> list:
        q_len = self.q_len
        return [i for i in range(self.n) if q_len[i] > 0]

    def alarm_holders(self) -> list:
        alarm_len = self.alarm_len
        return [i for i in range(self.n) if alarm_len[i] > 0]

    # -- slot execution ------------------------------------------------------

    def _push_arrivals(self, t: int):
        arr = self.arrivals
        slots = arr.slots
        ptr = self._ev_ptr
        start = ptr
        n_ev = slots.shape[0]
        while ptr < n_ev and slots[ptr] == t:
            q = int(arr.queues[ptr])
            if arr.alarms[ptr]:
                self.queues[q].alarm.append(t)
                self.alarm_len[q] += 1
                self.total_alarm += 1
                self.alarm_mask |= 1 << q
            else:
                self.queues[q].data.append(t)
            if self.q_len[q] == 0:
                self.nonempty_mask |= 1 << q
            self.q_len[q] += 1
            self.total_backlog += 1
            ptr += 1
        if t >= self.warmup and ptr > start:
            self.acc.arrivals_measured += ptr - start
        self._ev_ptr = ptr

    def execute_slot(self) -> SlotOutcome:
        """Advance the simulation by one slot and return its outcome."""
        t = self.t
        self._push_arrivals(t)
        backlog = self.total_backlog

        tx, klass, kind, minis, contention, alarm_mode, scheduled, v_reset = \
            self.policy.decide(self, t)

        if v_reset is not None:
            if type(v_reset) is int:
                self.last_tx[v_reset] = t
            else:
                for q in v_reset:
                    if q is not None:
                        self.last_tx[q] = t

        departed_arrival = None
        if tx is not None and kind == SUCCESS:
            success = True
            if self._fade is not None:
                success = self._fade[tx].take() < self.fading[tx]
            departed_arrival = apply_service(self.queues[tx], True, success, klass)
            if departed_arrival is not None:
                self.q_len[tx] -= 1
                self.total_backlog -= 1
                if self.q_len[tx] == 0:
                    self.nonempty_mask &= ~(1 << tx)
                if klass == ALARM:
                    self.alarm_len[tx] -= 1
                    self.total_alarm -= 1
                    if self.alarm_len[tx] == 0:
                        self.alarm_mask &= ~(1 << tx)
                self.dep_counts[tx] += 1
            else:
                kind = FADE_LOSS
            if getattr(self.policy, "polls_reveal", False) or departed_arrival is not None or kind == FADE_LOSS:
                self.last_obs[tx] = self.q_len[tx]
        elif scheduled is not None and getattr(self.policy, "polls_reveal", False):
            # a silent poll reveals emptiness to every listener
            self.last_obs[scheduled] = self.q_len[scheduled]

        acc = self.acc
        if t >= self.warmup:
            acc.on_slot(backlog, departed_arrival is not None)
            counted = scheduled if (self.count_empty_scheduled or tx is not None) else tx
            if counted is not None:
                acc.on_scheduled(counted)
            elif acc.collect_jain_trace:
                acc.on_scheduled(None)
            if departed_arrival is not None and departed_arrival >= self.warmup:
                acc.on_departure(tx, klass, t - departed_arrival + 1)
        if acc.backlog_window:
            acc.on_window_sample(t, backlog)

        if self.record_actions:
            self.actions.append(scheduled)
            self.served_flags.append(departed_arrival is not None)
        if self.probe_every and t % self.probe_every == 0:
            self.probes.append((t, list(self.last_obs), self.v_vector()))

        self.t = t + 1
        out = SlotOutcome(t, tx, kind, minis, contention, alarm_mode, scheduled)
        if self.record_trace:
            self.trace.append(out)
        return out

    def run(self) -> MetricsAccumulator:
        for _ in range(self.horizon - self.t):
            self.execute_slot()
        self.acc.slots_total = self.horizon
        return self.acc


def execute_slot(sim: Simulation) -> SlotOutcome:
    """Module-level alias: drive one slot of a bound policy."""
    return sim.execute_slot()
