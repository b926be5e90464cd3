"""Delay, backlog, fairness and utilization statistics with warm-up handling."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ALARM, DATA


class MetricsAccumulator:
    """Per-run counters, recorded only after the warm-up window.

    Tracks per-packet delays (per class and per queue), the total-backlog
    occupation counts (for the empirical CDF and the Little's-law estimate),
    scheduled-slot shares x_i for the fairness index, and the channel
    utilization numerator/denominator.
    """

    def __init__(self, n: int, rates, warmup: int = 0,
                 collect_jain_trace: bool = False, backlog_window: int = 0,
                 expected_slots: int = 0):
        self.n = n
        self.rates = tuple(rates)
        self.warmup = warmup
        self.slots_total = 0
        self.expected_slots = expected_slots
        self.slots_measured = 0
        self.arrivals_measured = 0
        self.backlog_sum = 0
        self.backlog_counts = {}
        self.zeta_num = 0
        self.zeta_den = 0
        self.zeta_num_late = 0
        self.zeta_den_late = 0
        self.sched_counts = [0] * n
        self._sched_sum = 0
        self._sched_sq = 0
        self.delay_sum = [0, 0]      # per class
        self.delay_count = [0, 0]
        self.min_delay = None
        self.queue_delay_sum = [0] * n
        self.queue_delay_count = [0] * n
        self.collect_jain_trace = collect_jain_trace
        self.jain_trace = [] if collect_jain_trace else None
        self.backlog_window = backlog_window
        self.window_sums = [] if backlog_window else None
        self._window_acc = 0
        self._window_fill = 0

    # -- recording ------------------------------------------------------------

    def on_slot(self, backlog: int, served_nonempty: bool):
        self.slots_measured += 1
        self.backlog_sum += backlog
        self.backlog_counts[backlog] = self.backlog_counts.get(backlog, 0) + 1
        if backlog > 0:
            self.zeta_den += 1
            if served_nonempty:
                self.zeta_num += 1
            # second-half counters back the two-way utilization check
            if self.slots_measured * 2 >= self.expected_slots:
                self.zeta_den_late += 1
                if served_nonempty:
                    self.zeta_num_late += 1

    def on_scheduled(self, queue: int | None):
        if queue is not None:
            c = self.sched_counts[queue]
            self.sched_counts[queue] = c + 1
            self._sched_sum += 1
            self._sched_sq += 2 * c + 1
        if self.collect_jain_trace:
            if self._sched_sum > 0:
                self.jain_trace.append(
                    self._sched_sum * self._sched_sum / (self.n * self._sched_sq))
            else:
                self.jain_trace.append(None)

    def on_departure(self, queue: int, klass: int, delay: int):
        self.delay_sum[klass] += delay
        self.delay_count[klass] += 1
        self.queue_delay_sum[queue] += delay
        self.queue_delay_count[queue] += 1
        if self.min_delay is None or delay < self.min_delay:
            self.min_delay = delay

    def on_window_sample(self, t: int, backlog: int):
        self._window_acc += backlog
        self._window_fill += 1
        if self._window_fill == self.backlog_window:
            self.window_sums.append(self._window_acc)
            self._window_acc = 0
            self._window_fill = 0

    def merge(self, other: "MetricsAccumulator") -> None:
        """Fold another run's counters into this one (sweep aggregation)."""
        if other.n != self.n:
            raise ValueError("cannot merge accumulators of different widths")
        self.slots_total += other.slots_total
        self.slots_measured += other.slots_measured
        self.backlog_sum += other.backlog_sum
        for k, v in other.backlog_counts.items():
            self.backlog_counts[k] = self.backlog_counts.get(k, 0) + v
        self.zeta_num += other.zeta_num
        self.zeta_den += other.zeta_den
        self.zeta_num_late += other.zeta_num_late
        self.zeta_den_late += other.zeta_den_late
        for i in range(self.n):
            self.sched_counts[i] += other.sched_counts[i]
            self.queue_delay_sum[i] += other.queue_delay_sum[i]
            self.queue_delay_count[i] += other.queue_delay_count[i]
        for k in (DATA, ALARM):
            self.delay_sum[k] += other.delay_sum[k]
            self.delay_count[k] += other.delay_count[k]
        self._sched_sum = sum(self.sched_counts)
        self._sched_sq = sum(c * c for c in self.sched_counts)

    # -- derived values --------------------------------------------------------

    @property
    def departures(self) -> int:
        return self.delay_count[DATA] + self.delay_count[ALARM]


def mean_delay(acc: MetricsAccumulator, klass: int | None = None) -> float:
    """Arithmetic mean of the recorded per-packet delays (slots)."""
    if klass is None:
        total, count = sum(acc.delay_sum), sum(acc.delay_count)
    else:
        total, count = acc.delay_sum[klass], acc.delay_count[klass]
    if count == 0:
        raise ValueError("no departures recorded")
    return total / count


def per_queue_delay(acc: MetricsAccumulator) -> list:
    """Mean delay per queue; None for queues without recorded departures."""
    out = []
    for s, c in zip(acc.queue_delay_sum, acc.queue_delay_count):
        out.append(s / c if c else None)
    return out


def little_law_delay(acc: MetricsAccumulator, realized: bool = False) -> float:
    """Little's-law estimate: time-averaged total backlog over the total rate.

    With ``realized`` the denominator is the empirical arrival rate of the
    measurement window, which turns the estimate into a pathwise identity up
    to window-boundary packets (useful on short runs, where the binomial
    noise of the realized arrival count would otherwise dominate).
    """
    if acc.slots_measured == 0:
        raise ValueError("no measured slots")
    if realized:
        total_rate = acc.arrivals_measured / acc.slots_measured
    else:
        total_rate = sum(acc.rates)
    if total_rate <= 0:
        raise ValueError("zero arrival rate")
    return acc.backlog_sum / acc.slots_measured / total_rate


def fairness_index(x) -> float:
    """Jain index J = (sum x_i)^2 / (N sum x_i^2), in [1/N, 1]."""
    x = list(x)
    s = float(sum(x))
    sq = sum(v * v for v in x)
    if s <= 0 or sq <= 0:
        raise ValueError("fairness index needs a positive total share")
    return s * s / (len(x) * sq)


def channel_utilization(acc: MetricsAccumulator) -> float:
    """Fraction of nonempty-system slots in which a nonempty queue was served."""
    if acc.zeta_den == 0:
        raise ValueError("no slot with a nonempty system")
    return acc.zeta_num / acc.zeta_den


def utilization_two_ways(acc: MetricsAccumulator):
    """The ergodic ratio over the whole window and over its second half.

    Under an ergodic backlog process the two agree up to statistical error,
    which is the cross-check the conditional-probability definition calls for.
    """
    full = channel_utilization(acc)
    late = acc.zeta_num_late / acc.zeta_den_late if acc.zeta_den_late else full
    return full, late


@dataclass
class BacklogCdf:
    values: list
    cum_probs: list

    def at(self, x) -> float:
        """P(total backlog <= x)."""
        p = 0.0
        for v, c in zip(self.values, self.cum_probs):
            if v <= x:
                p = c
            else:
                break
        return p

    @property
    def support_max(self) -> int:
        return self.values[-1]


def backlog_cdf(acc: MetricsAccumulator) -> BacklogCdf:
    """Empirical step CDF of the post-warmup total backlog."""
    if not acc.backlog_counts:
        raise ValueError("empty backlog trace")
    values = sorted(acc.backlog_counts)
    total = acc.slots_measured
    cum = []
    s = 0
    for v in values:
        s += acc.backlog_counts[v]
        cum.append(s / total)
    return BacklogCdf(values=values, cum_probs=cum)


def windowed_means(acc: MetricsAccumulator) -> list:
    """Mean total backlog over consecutive fixed-size windows."""
    if not acc.backlog_window or not acc.window_sums:
        raise ValueError("run was not configured with a backlog window")
    w = acc.backlog_window
    return [s / w for s in acc.window_sums]


def backlog_slope(acc: MetricsAccumulator) -> float:
    """Least-squares growth rate (packets/slot) of the windowed backlog means."""
    means = windowed_means(acc)
    if len(means) < 2:
        raise ValueError("need at least two windows")
    w = acc.backlog_window
    xs = [(i + 0.5) * w for i in range(len(means))]
    mx = sum(xs) / len(xs)
    my = sum(means) / len(means)
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, means))
    return sxy / sxx


def time_to_reach(jain_trace, level: float):
    """Index (slots into the measured window) at which J(t) first reaches level."""
    for i, j in enumerate(jain_trace):
        if j is not None and j >= level:
            return i
    return None
