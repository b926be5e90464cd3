"""Protocol state machines and scheduling policies.

Queue indices are 0-based throughout.  The V-vector is the common-information
age of each queue: slots since it was last *allowed* to transmit, starting
from V_i(0)=i+1 and kept in the engine as last-grant slots.  Exactly one
coordinate is zeroed per bookkeeping slot: the incumbent while it transmits,
otherwise the argmax queue that was polled in its place, whether or not that
poll found a packet.  A poll of an empty queue still reveals its state to
every listener, so its age resets; without that reset the argmax scan pins
itself onto long-empty queues and the protocol degrades into pure contention.
Secondary-user and contention-winner transmissions leave the vector untouched
(the age bookkeeping for such a slot already happened at the failed poll).
"""

from __future__ import annotations

import math

from .core import ALARM, DATA
from . import frame
from .frame import COLLISION, IDLE, RESET, SUCCESS, MissBudget, sense_round

INFINITE_K = None


# -- pure selection rules ----------------------------------------------------

def oracle_select(backlogs):
    """Lowest-id nonempty queue, or None (centralized full-knowledge baseline)."""
    for i, q in enumerate(backlogs):
        if q > 0:
            return i
    return None


def tdma_select(t: int, n: int) -> int:
    """Owner of slot t in a cyclically repeating n-slot frame."""
    return t % n


def leq_select(v, rates) -> int:
    """argmax_i rates_i * v_i, ties broken by lowest queue id."""
    best, bv = 0, rates[0] * v[0]
    for i in range(1, len(v)):
        x = rates[i] * v[i]
        if x > bv:
            best, bv = i, x
    return best


def second_argmax(v) -> int:
    """argmax over everything except the argmax coordinate (lowest-id ties)."""
    m, bv = 0, v[0]
    for i in range(1, len(v)):
        if v[i] > bv:
            m, bv = i, v[i]
    best, bs = None, None
    for i, x in enumerate(v):
        if i == m:
            continue
        if bs is None or x > bs:
            best, bs = i, x
    return best


def apply_cca_misalignment(v, incumbent: int, istar: int, deviant: int,
                           deviant_nonempty: bool):
    """Local V-vector bookkeeping for a CCA miss of the incumbent's activity.

    ``v`` is the aligned vector at the start of a slot in which the incumbent
    is transmitting and ``deviant`` missed that activity.  Returns
    (kind, believed, corrected): the deviant's end-of-slot copy under its
    mistaken belief and the copy after the in-slot header decode repairs it
    (None for M2, where the collision leaves nothing to decode).
    """
    n = len(v)
    believed = [x + 1 for x in v]
    believed[istar] = 0
    corrected = [x + 1 for x in v]
    corrected[incumbent] = 0
    if deviant != istar:
        return "M1", believed, corrected
    if deviant_nonempty:
        return "M2", believed, None
    return "M3", believed, corrected


# -- centralized baselines ----------------------------------------------------

class OraclePolicy:
    """Serve any (lowest-id) nonempty queue; full queue-length knowledge."""

    kind = "oracle"
    min_tp = 0
    polls_reveal = False

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        mask = sim.nonempty_mask
        if mask:
            q = (mask & -mask).bit_length() - 1
            return (q, DATA, SUCCESS, 0, False, False, q, q)
        return (None, DATA, IDLE, 0, False, False, None, None)


class PriorityOraclePolicy:
    """Full-knowledge scheduler with strict priority for alarm packets."""

    kind = "priority_oracle"
    min_tp = 0
    polls_reveal = False

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        amask = sim.alarm_mask
        if amask:
            q = (amask & -amask).bit_length() - 1
            return (q, ALARM, SUCCESS, 0, False, False, q, q)
        mask = sim.nonempty_mask
        if mask:
            q = (mask & -mask).bit_length() - 1
            return (q, DATA, SUCCESS, 0, False, False, q, q)
        return (None, DATA, IDLE, 0, False, False, None, None)


class NullPolicy:
    """Never transmits; the always-idle lower bound for channel utilization."""

    kind = "null"
    min_tp = 0
    polls_reveal = False

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        return (None, DATA, IDLE, 0, False, False, None, None)


class TdmaPolicy:
    """1-limited cyclic polling: slot t belongs to queue t mod n, no recovery."""

    kind = "tdma"
    min_tp = 0
    polls_reveal = False

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        q = t % sim.n
        if sim.q_len[q] > 0:
            return (q, DATA, SUCCESS, 0, False, False, q, q)
        return (None, DATA, IDLE, 0, False, False, q, q)


# -- exhaustive polling family (one poll-and-test per slot) -------------------

class _Poller:
    """Shared skeleton: serve the incumbent while allowed, else poll the
    switch rule's target, wasting the slot if that target turns out empty."""

    min_tp = 1
    polls_reveal = True

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        m = sim.layout.t_a + 1
        inc = sim.incumbent
        if sim.q_len[inc] > 0 and self._may_continue(sim):
            self._note_serve(sim, continued=True)
            return (inc, DATA, SUCCESS, m, False, False, inc, inc)
        inc = self._switch_target(sim, t)
        sim.incumbent = inc
        self._note_switch(sim)
        if sim.q_len[inc] > 0:
            self._note_serve(sim, continued=False)
            return (inc, DATA, SUCCESS, m, False, False, inc, inc)
        return (None, DATA, IDLE, m, False, False, inc, inc)

    def _may_continue(self, sim):
        return True

    def _note_serve(self, sim, continued):
        pass

    def _note_switch(self, sim):
        pass


class CyclicExhaustivePolicy(_Poller):
    """Exhaustive service of argmax V: delay-optimal in symmetric systems."""

    kind = "cyclic_exhaustive"

    def _switch_target(self, sim, t):
        return sim.argmax_age()


class LeqPolicy(_Poller):
    """Longest-expected-queue: switch to argmax rate_i * V_i, serve it dry."""

    kind = "leq_exact"

    def __init__(self, rates):
        self.rates = tuple(rates)

    def _switch_target(self, sim, t):
        return sim.argmax_weighted_age(self.rates)


class DeviatedExhaustivePolicy(_Poller):
    """argmax-V exhaustive service that deliberately picks the second-largest
    age whenever every age is at most k (a stable but suboptimal variant)."""

    kind = "deviated_exhaustive"

    def __init__(self, k: int):
        self.k = int(k)

    def _switch_target(self, sim, t):
        v = sim.v_vector()
        if max(v) <= self.k:
            return second_argmax(v)
        best, bv = 0, v[0]
        for i in range(1, len(v)):
            if v[i] > bv:
                best, bv = i, v[i]
        return best


class KleqPolicy(_Poller):
    """K-limited LEQ: at most K consecutive services, then switch to the queue
    with the largest last-observed backlog plus expected growth."""

    kind = "kleq"

    def __init__(self, rates, k=INFINITE_K):
        self.rates = tuple(rates)
        if k is not INFINITE_K and int(k) < 1:
            raise ValueError("K must be >= 1")
        self.k = None if k is INFINITE_K else int(k)
        self.run = 0

    def bind(self, sim):
        if self.k is not None and sim.n < 2:
            raise ValueError("K-limited service needs at least two queues")
        self.run = 0

    def _may_continue(self, sim):
        return self.k is None or self.run < self.k

    def _switch_target(self, sim, t):
        inc = sim.incumbent
        forced = sim.q_len[inc] > 0  # switching away only because the cap hit
        last_obs = sim.last_obs
        rates = self.rates
        t1 = t - 1
        last = sim.last_tx
        best, bv = None, None
        for i in range(sim.n):
            if forced and i == inc:
                continue
            x = last_obs[i] + rates[i] * (t1 - last[i])
            if bv is None or x > bv:
                best, bv = i, x
        return best

    def _note_serve(self, sim, continued):
        self.run = self.run + 1 if continued else 1

    def _note_switch(self, sim):
        self.run = 0


class GklsPolicy:
    """Gated K-limited service: dwell exactly K slots at the chosen queue,
    serving only the packets present when the dwell began, idling otherwise."""

    kind = "gkls"
    min_tp = 1
    polls_reveal = False

    def __init__(self, rates, k: int):
        if int(k) < 1:
            raise ValueError("K must be >= 1")
        self.rates = tuple(rates)
        self.k = int(k)
        self.target = 0
        self.dwell_left = 0
        self.gate_left = 0

    def bind(self, sim):
        self.target = sim.incumbent
        self.dwell_left = 0
        self.gate_left = 0

    def decide(self, sim, t):
        m = sim.layout.t_a + 1
        if self.dwell_left == 0:
            last_obs = sim.last_obs
            rates = self.rates
            t1 = t - 1
            last = sim.last_tx
            best, bv = 0, last_obs[0] + rates[0] * (t1 - last[0])
            for i in range(1, sim.n):
                x = last_obs[i] + rates[i] * (t1 - last[i])
                if x > bv:
                    best, bv = i, x
            self.target = best
            sim.incumbent = best
            self.dwell_left = self.k
            self.gate_left = sim.q_len[best]
        tgt = self.target
        self.dwell_left -= 1
        if self.gate_left > 0:
            self.gate_left -= 1
            return (tgt, DATA, SUCCESS, m, False, False, tgt, tgt)
        return (None, DATA, IDLE, m, False, False, tgt, tgt)


# -- hybrid MAC protocols ------------------------------------------------------

class ZmacPolicy:
    """Cyclic TDMA owner with contention recovery of empty owner slots; a
    contention win grants exactly one slot."""

    kind = "zmac"
    min_tp = 1
    polls_reveal = False

    def bind(self, sim):
        pass

    def decide(self, sim, t):
        la = sim.layout.t_a
        pu = t % sim.n
        if sim.q_len[pu] > 0:
            return (pu, DATA, SUCCESS, la + 1, False, False, pu, pu)
        t_p = sim.layout.t_p
        if sim.layout.t_c < 1:
            return (None, DATA, IDLE, la + t_p, False, False, None, None)
        contenders = sim.nonempty_queues()
        kind, winner, off = sim.contend(contenders)
        if kind == "winner":
            m = la + t_p + off + 1
            return (winner, DATA, SUCCESS, m, True, False, winner, winner)
        if kind == "collision":
            return (None, DATA, COLLISION, la + t_p + off + 1, True, False, None, None)
        return (None, DATA, IDLE, la + t_p + sim.layout.t_c, True, False, None, None)


class EzmacPolicy(ZmacPolicy):
    """ZMAC with a reserving contention winner: the latest winner keeps every
    ownerless slot until it empties, so contention runs far less often."""

    kind = "ezmac"
    min_tp = 2

    def decide(self, sim, t):
        la = sim.layout.t_a
        pu = t % sim.n
        if sim.q_len[pu] > 0:
            return (pu, DATA, SUCCESS, la + 1, False, False, pu, pu)
        su = sim.su
        if sim.q_len[su] > 0:
            return (su, DATA, SUCCESS, la + 2, False, False, su, su)
        t_p = sim.layout.t_p
        if sim.layout.t_c < 1:
            return (None, DATA, IDLE, la + t_p, False, False, None, None)
        contenders = sim.nonempty_queues()
        kind, winner, off = sim.contend(contenders)
        if kind == "winner":
            sim.su = winner
            m = la + t_p + off + 1
            return (winner, DATA, SUCCESS, m, True, False, winner, winner)
        if kind == "collision":
            return (None, DATA, COLLISION, la + t_p + off + 1, True, False, None, None)
        return (None, DATA, IDLE, la + t_p + sim.layout.t_c, True, False, None, None)


class QzmacPolicy:
    """Exhaustive incumbent, argmax-age poll, reserved contention winner.

    Minislot lanes in order: the incumbent transmits while nonempty; else the
    queue with the largest age (or rate-weighted age) is polled and, if it
    transmits, becomes the incumbent; else the latest contention winner is
    polled; else the nonempty queues contend.  With t_p below 3 the later
    lanes have no minislot and are skipped.
    """

    kind = "qzmac"
    min_tp = 3
    polls_reveal = False

    def __init__(self, selector: str = "age", rates=None):
        if selector not in ("age", "weighted", "estimated"):
            raise ValueError(f"unknown selector {selector!r}")
        if selector == "weighted" and rates is None:
            raise ValueError("weighted selector needs rates")
        self.selector = selector
        self.rates = tuple(rates) if rates is not None else None

    def bind(self, sim):
        if sim.n < 2:
            raise ValueError("protocol needs at least two queues")

    def select(self, sim, t):
        if self.selector == "age":
            return sim.argmax_age()
        if self.selector == "weighted":
            return sim.argmax_weighted_age(self.rates)
        counts = sim.dep_counts
        if sum(counts) == 0:  # no departures observed yet anywhere
            return sim.argmax_age()
        return sim.argmax_weighted_age(counts)

    def decide(self, sim, t):
        inc = sim.incumbent
        if sim.q_len[inc] > 0:
            m = sim.layout.t_a + 1
            return (inc, DATA, SUCCESS, m, False, False, inc, inc)
        return self._after_incumbent(sim, t)

    def _after_incumbent(self, sim, t):
        # every lane's minislot verifies one queue's state to all listeners,
        # so each polled queue re-enters the age ladder at the bottom whether
        # or not its poll produced a packet
        la = sim.layout.t_a
        t_p = sim.layout.t_p
        inc = sim.incumbent
        istar = None
        if t_p >= 2:
            istar = self.select(sim, t)
            if sim.q_len[istar] > 0:
                sim.incumbent = istar
                return (istar, DATA, SUCCESS, la + 2, False, False, istar, (inc, istar))
        su = sim.su if t_p >= 3 else None
        if su is not None and sim.q_len[su] > 0:
            # reservation service: the latest winner keeps every slot the
            # polls leave free, but does not take the incumbent role
            return (su, DATA, SUCCESS, la + 3, False, False, su, (inc, istar, su))
        if sim.layout.t_c < 1:
            return (None, DATA, IDLE, la + t_p, False, False, None, (inc, istar, su))
        contenders = sim.nonempty_queues()
        kind, winner, off = sim.contend(contenders)
        if kind == "winner":
            sim.su = winner
            m = la + t_p + off + 1
            return (winner, DATA, SUCCESS, m, True, False, winner, (inc, istar, su, winner))
        if kind == "collision":
            return (None, DATA, COLLISION, la + t_p + off + 1, True, False, None, (inc, istar, su))
        return (None, DATA, IDLE, la + t_p + sim.layout.t_c, True, False, None, (inc, istar, su))


class QzmacAlarmPolicy(QzmacPolicy):
    """QZMAC with an alarm minislot: any queue holding an alarm packet jams it,
    which suspends normal operation; alarm holders contend until none remain."""

    kind = "qzmac_alarm"
    needs_alarm_minislot = True

    def decide(self, sim, t):
        if sim.total_alarm > 0:
            la = sim.layout.t_a
            t_p = sim.layout.t_p
            holders = sim.alarm_holders()
            kind, winner, off = sim.contend(holders)
            if kind == "winner":
                m = la + t_p + off + 1
                return (winner, ALARM, SUCCESS, m, True, True, winner, winner)
            return (None, ALARM, COLLISION, la + t_p + off + 1, True, True, None, None)
        return super().decide(sim, t)


class QzmacCcaPolicy(QzmacPolicy):
    """QZMAC under CCA misses, with the timeout-triggered network reset.

    Misses are injected on the incumbent's busy minislot (the case the
    misalignment taxonomy covers).  A non-argmax listener's miss (M1) and an
    empty argmax listener's miss (M3) are repaired within the slot by decoding
    the transmitted header.  A nonempty argmax listener's miss (M2) makes it
    transmit over the incumbent; the two collide persistently until both count
    k_thr timeouts, jam the polling minislots, and contend to deliver a reset
    request, upon which the base station's beacon realigns every local copy
    (ages back to the initial ladder) without dropping any packet.
    """

    kind = "qzmac_reset"

    def __init__(self, selector: str = "age", rates=None, k_thr: int = 5):
        super().__init__(selector, rates)
        if int(k_thr) < 1:
            raise ValueError("k_thr must be >= 1")
        self.k_thr = int(k_thr)
        self.deviant = None
        self.timeout = 0
        self.coll = set()
        self.m1 = 0
        self.m2 = 0
        self.m3 = 0
        self.repaired_same_slot = 0
        self.m2_episodes = 0
        self.resets_completed = 0
        self.reset_slots = 0
        self.collision_slots = 0

    def bind(self, sim):
        super().bind(sim)
        self.deviant = None
        self.timeout = 0
        self.coll = set()

    def _apply_beacon(self, sim, t):
        # every node sets V_k back to the initial ladder; nothing is dropped
        for i in range(sim.n):
            sim.last_tx[i] = t - i - 1
        sim.incumbent = 0
        sim.su = 1 if sim.n > 1 else 0
        self.coll = set()
        self.deviant = None
        self.timeout = 0
        self.resets_completed += 1

    def decide(self, sim, t):
        la = sim.layout.t_a
        t_p = sim.layout.t_p
        if self.coll:
            # colliding nodes jam all polling minislots and contend to reach
            # the base station with a reset request
            self.reset_slots += 1
            kind, winner, off = sim.contend(sorted(self.coll))
            if kind == "winner":
                self._apply_beacon(sim, t)
                m = la + t_p + off + 1
            else:
                m = la + t_p + (off + 1 if off is not None else sim.layout.t_c)
            return (None, DATA, RESET, m, True, False, None, None)
        if self.deviant is not None:
            # both believers retransmit their head-of-line packet and collide
            self.collision_slots += 1
            self.timeout += 1
            if self.timeout >= self.k_thr:
                self.coll = {sim.incumbent, self.deviant}
            return (None, DATA, COLLISION, la + 1, False, False, None, None)
        inc = sim.incumbent
        if sim.q_len[inc] > 0:
            if sim._cca_miss is not None:
                budget = MissBudget(sim.cca.max_misses_per_slot)
                listeners = [i for i in range(sim.n) if i != inc]
                missed = sense_round(listeners, sim.cca, sim._cca_pick.take(),
                                     sim._cca_miss.take(), budget)
                if missed is not None:
                    istar = self.select(sim, t)
                    kind, _, _ = apply_cca_misalignment(
                        sim.v_vector(), inc, istar, missed,
                        deviant_nonempty=sim.q_len[missed] > 0)
                    if kind == "M2":
                        self.m2 += 1
                        self.m2_episodes += 1
                        self.deviant = missed
                        self.timeout = 1
                        self.collision_slots += 1
                        return (None, DATA, COLLISION, la + 1, False, False, None, None)
                    if kind == "M3":
                        self.m3 += 1
                    else:
                        self.m1 += 1
                    self.repaired_same_slot += 1
            return (inc, DATA, SUCCESS, la + 1, False, False, inc, inc)
        return self._after_incumbent(sim, t)
