"""Experiment configuration and result records (pydantic models).

These models are the wire format of the service endpoints, the on-disk JSON
recipe format (versioned via ``schema_version``) and the CSV row schema, so
everything that runs an experiment shares one validated vocabulary.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, model_validator

PolicyName = Literal[
    "oracle", "priority_oracle", "null", "tdma",
    "zmac", "ezmac", "qzmac", "qzmac_leq", "leq_estimated", "qzmac_reset",
    "qzmac_alarm",
    "cyclic_exhaustive", "leq_exact", "kleq", "gkls", "deviated_exhaustive",
]

# protocols that require a minimum number of polling minislots
MIN_TP = {
    "zmac": 1, "ezmac": 2,
    "qzmac": 3, "qzmac_leq": 3, "leq_estimated": 3, "qzmac_reset": 3,
    "qzmac_alarm": 3,
    "cyclic_exhaustive": 1, "leq_exact": 1, "kleq": 1, "gkls": 1,
    "deviated_exhaustive": 1,
    "oracle": 0, "priority_oracle": 0, "null": 0, "tdma": 0,
}

RATE_BEARING = {"qzmac_leq", "leq_exact", "kleq", "gkls"}


class LayoutSpec(BaseModel):
    t_a: int = 0
    t_p: int = 1
    t_c: int = 0


class ChannelSpec(BaseModel):
    p_miss: float = 0.0
    fading: Optional[list[float]] = None


class ExperimentConfig(BaseModel):
    schema_version: int = 1
    scenario_id: str = "scenario"
    policy: PolicyName
    n_queues: int = Field(ge=1)
    rate: Optional[float] = None            # symmetric shorthand
    rates: Optional[list[float]] = None     # explicit per-queue rates
    alarm_fraction: float | list[float] = 0.0
    k_limit: Optional[int] = None           # K for the K-limited policies
    k_thr: int = 5
    deviation_k: Optional[int] = None       # age box for the deviated variant
    layout: Optional[LayoutSpec] = None
    channel: ChannelSpec = ChannelSpec()
    horizon: int = Field(default=100_000, ge=2)
    warmup: int = Field(default=10_000, ge=0)
    seed: int = 0
    repetitions: int = Field(default=1, ge=1)
    count_empty_scheduled: bool = True
    allow_reduced_tp: bool = False
    dump_trace: bool = False

    @model_validator(mode="after")
    def _check(self):
        problems = []
        if (self.rate is None) == (self.rates is None):
            problems.append("exactly one of rate/rates must be given")
        if self.rates is not None and len(self.rates) != self.n_queues:
            problems.append("rates length must equal n_queues")
        for r in self.resolved_rates(lenient=True):
            if not (0.0 <= r < 1.0):
                problems.append(f"arrival rate {r} outside [0, 1)")
                break
        if self.warmup >= self.horizon:
            problems.append("horizon must exceed warmup")
        lay = self.resolved_layout()
        min_tp = MIN_TP[self.policy]
        if lay.t_p < min_tp and not (self.allow_reduced_tp and self.policy == "qzmac"):
            problems.append(f"policy {self.policy} requires t_p >= {min_tp}")
        if self.policy == "qzmac_alarm" and lay.t_a != 1:
            problems.append("qzmac_alarm requires t_a = 1")
        if self.policy in ("kleq", "gkls") and self.k_limit is not None and self.k_limit < 1:
            problems.append("k_limit must be >= 1")
        if self.policy == "gkls" and self.k_limit is None:
            problems.append("gkls requires k_limit")
        if self.policy == "deviated_exhaustive" and self.deviation_k is None:
            problems.append("deviated_exhaustive requires deviation_k")
        if self.channel.fading is not None and len(self.channel.fading) != self.n_queues:
            problems.append("fading length must equal n_queues")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def resolved_rates(self, lenient: bool = False) -> list[float]:
        if self.rates is not None:
            return list(self.rates)
        if self.rate is not None:
            return [self.rate] * self.n_queues
        if lenient:
            return []
        raise ValueError("no rates given")

    def resolved_layout(self) -> LayoutSpec:
        if self.layout is not None:
            return self.layout
        defaults = {
            "zmac": LayoutSpec(t_p=1, t_c=9),
            "ezmac": LayoutSpec(t_p=2, t_c=8),
            "qzmac": LayoutSpec(t_p=3, t_c=9),
            "qzmac_leq": LayoutSpec(t_p=3, t_c=9),
            "leq_estimated": LayoutSpec(t_p=3, t_c=9),
            "qzmac_reset": LayoutSpec(t_p=3, t_c=9),
            "qzmac_alarm": LayoutSpec(t_a=1, t_p=3, t_c=9),
        }
        if self.policy in defaults:
            return defaults[self.policy]
        if self.policy in ("oracle", "priority_oracle", "null", "tdma"):
            return LayoutSpec(t_p=0, t_c=0)
        return LayoutSpec(t_p=1, t_c=0)


class SweepAxis(BaseModel):
    param: Literal["rate", "total_load", "policy", "policy_matched", "t_p",
                   "t_c", "budget", "p_miss", "k_limit", "deviation_k",
                   "alarm_fraction", "seed"]
    values: list[Any] = Field(min_length=1)
    # keep t_a + t_p + t_c constant while sweeping t_p or matched policies
    minislot_budget: Optional[int] = None


class SweepConfig(BaseModel):
    schema_version: int = 1
    base: ExperimentConfig
    axes: list[SweepAxis] = Field(min_length=1)


class ResultRecord(BaseModel):
    scenario_id: str
    policy: str
    n_queues: int
    rates: list[float]
    t_a: int
    t_p: int
    t_c: int
    p_miss: float
    horizon: int
    warmup: int
    seed: int
    repetitions: int
    mean_delay: Optional[float] = None
    delay_ci: Optional[float] = None
    little_law_delay: Optional[float] = None
    zeta: Optional[float] = None
    jain_final: Optional[float] = None
    cdf_support_max: Optional[int] = None
    per_queue_delay: list[Optional[float]] = []
    data_mean_delay: Optional[float] = None
    alarm_mean_delay: Optional[float] = None
    departures: int = 0
    misalignments_m1: Optional[int] = None
    misalignments_m2: Optional[int] = None
    misalignments_m3: Optional[int] = None
    resets_completed: Optional[int] = None
    axis_values: dict[str, Any] = {}


CSV_COLUMNS = [
    "scenario_id", "policy", "n_queues", "rates", "t_a", "t_p", "t_c",
    "p_miss", "horizon", "mean_delay", "delay_ci", "little_law_delay",
    "zeta", "jain_final", "cdf_support_max", "per_queue_delay",
    "warmup", "seed", "repetitions", "data_mean_delay", "alarm_mean_delay",
    "departures", "misalignments_m1", "misalignments_m2", "misalignments_m3",
    "resets_completed", "axis_values",
]
