"""Experiment runner: config to simulation to result records and CSV."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics, policies
from .config import CSV_COLUMNS, ExperimentConfig, ResultRecord, SweepConfig
from .core import ALARM, DATA, ArrivalSpec
from .frame import CcaModel, FrameLayout, Simulation

RECIPES_DIR = Path(__file__).resolve().parent / "recipes"


def build_policy(cfg: ExperimentConfig):
    rates = cfg.resolved_rates()
    name = cfg.policy
    if name == "oracle":
        return policies.OraclePolicy()
    if name == "priority_oracle":
        return policies.PriorityOraclePolicy()
    if name == "null":
        return policies.NullPolicy()
    if name == "tdma":
        return policies.TdmaPolicy()
    if name == "zmac":
        return policies.ZmacPolicy()
    if name == "ezmac":
        return policies.EzmacPolicy()
    if name == "qzmac":
        return policies.QzmacPolicy()
    if name == "qzmac_leq":
        return policies.QzmacPolicy(selector="weighted", rates=rates)
    if name == "leq_estimated":
        return policies.QzmacPolicy(selector="estimated")
    if name == "qzmac_reset":
        return policies.QzmacCcaPolicy(k_thr=cfg.k_thr)
    if name == "qzmac_alarm":
        return policies.QzmacAlarmPolicy()
    if name == "cyclic_exhaustive":
        return policies.CyclicExhaustivePolicy()
    if name == "leq_exact":
        return policies.LeqPolicy(rates)
    if name == "kleq":
        return policies.KleqPolicy(rates, k=cfg.k_limit)
    if name == "gkls":
        return policies.GklsPolicy(rates, k=cfg.k_limit)
    if name == "deviated_exhaustive":
        return policies.DeviatedExhaustivePolicy(cfg.deviation_k)
    raise ValueError(f"unknown policy {name!r}")


def build_simulation(cfg: ExperimentConfig, seed: int, **extra) -> Simulation:
    lay = cfg.resolved_layout()
    spec = ArrivalSpec.of(cfg.resolved_rates(), cfg.alarm_fraction)
    pol = build_policy(cfg)
    if cfg.allow_reduced_tp:
        pol.min_tp = min(pol.min_tp, lay.t_p)
    return Simulation(
        pol, spec,
        layout=FrameLayout(t_a=lay.t_a, t_p=lay.t_p, t_c=lay.t_c),
        seed=seed, horizon=cfg.horizon, warmup=cfg.warmup,
        cca=CcaModel(p_miss=cfg.channel.p_miss),
        fading=cfg.channel.fading,
        count_empty_scheduled=cfg.count_empty_scheduled,
        record_trace=cfg.dump_trace,
        **extra,
    )


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    """Execute ``repetitions`` seeded runs and aggregate one result record.

    Repetition r uses seed ``seed + r`` so paired comparisons across policies
    share arrival sample paths rep by rep.  Fixed seed and config give a
    bit-identical record.
    """
    rec, _ = run_experiment_with_traces(cfg)
    return rec


def run_experiment_with_traces(cfg: ExperimentConfig):
    lay = cfg.resolved_layout()
    rates = cfg.resolved_rates()
    delays = []
    merged = None
    pol = None
    traces = []
    for rep in range(cfg.repetitions):
        sim = build_simulation(cfg, cfg.seed + rep)
        acc = sim.run()
        pol = sim.policy
        if acc.departures:
            delays.append(metrics.mean_delay(acc))
        if merged is None:
            merged = acc
        else:
            merged.merge(acc)
        if cfg.dump_trace:
            traces.append(sim.trace)
    rec = ResultRecord(
        scenario_id=cfg.scenario_id, policy=cfg.policy, n_queues=cfg.n_queues,
        rates=rates, t_a=lay.t_a, t_p=lay.t_p, t_c=lay.t_c,
        p_miss=cfg.channel.p_miss, horizon=cfg.horizon, warmup=cfg.warmup,
        seed=cfg.seed, repetitions=cfg.repetitions,
    )
    rec.departures = merged.departures
    if merged.departures:
        rec.mean_delay = metrics.mean_delay(merged)
        rec.per_queue_delay = metrics.per_queue_delay(merged)
        if merged.delay_count[DATA]:
            rec.data_mean_delay = metrics.mean_delay(merged, DATA)
        if merged.delay_count[ALARM]:
            rec.alarm_mean_delay = metrics.mean_delay(merged, ALARM)
    if len(delays) > 1:
        rec.delay_ci = 1.96 * statistics.stdev(delays) / math.sqrt(len(delays))
    if merged.slots_measured and sum(rates) > 0:
        rec.little_law_delay = metrics.little_law_delay(merged)
    if merged.zeta_den:
        rec.zeta = metrics.channel_utilization(merged)
    if sum(merged.sched_counts) > 0:
        rec.jain_final = metrics.fairness_index(merged.sched_counts)
    if merged.backlog_counts:
        rec.cdf_support_max = metrics.backlog_cdf(merged).support_max
    if isinstance(pol, policies.QzmacCcaPolicy):
        rec.misalignments_m1 = pol.m1
        rec.misalignments_m2 = pol.m2
        rec.misalignments_m3 = pol.m3
        rec.resets_completed = pol.resets_completed
    return rec, traces


def _apply_axis(cfg: ExperimentConfig, param: str, value, budget) -> ExperimentConfig:
    upd = cfg.model_copy(deep=True)
    if param == "rate":
        upd.rate, upd.rates = float(value), None
    elif param == "total_load":
        upd.rate, upd.rates = float(value) / cfg.n_queues, None
    elif param == "policy":
        upd.policy = value
        upd.layout = None  # fall back to the policy's default layout
    elif param == "policy_matched":
        # protocols compared at an equal minislot budget: each takes its
        # minimum polling allotment, the remainder goes to contention
        from .config import MIN_TP, LayoutSpec
        upd.policy = value
        t_p = MIN_TP[value]
        if t_p > 0 and budget is not None:
            upd.layout = LayoutSpec(t_a=0, t_p=t_p, t_c=budget - t_p)
        else:
            upd.layout = None
    elif param == "t_p":
        lay = upd.resolved_layout().model_copy()
        lay.t_p = int(value)
        if budget is not None:
            lay.t_c = budget - lay.t_a - lay.t_p
        upd.layout = lay
        if upd.policy in ("qzmac", "qzmac_leq", "leq_estimated") and lay.t_p < 3:
            upd.allow_reduced_tp = True
    elif param == "t_c":
        lay = upd.resolved_layout().model_copy()
        lay.t_c = int(value)
        upd.layout = lay
    elif param == "budget":
        # total minislot budget; polling keeps its allotment
        lay = upd.resolved_layout().model_copy()
        lay.t_c = int(value) - lay.t_a - lay.t_p
        upd.layout = lay
    elif param == "p_miss":
        upd.channel = upd.channel.model_copy()
        upd.channel.p_miss = float(value)
    elif param == "k_limit":
        upd.k_limit = int(value)
    elif param == "deviation_k":
        upd.deviation_k = int(value)
    elif param == "alarm_fraction":
        upd.alarm_fraction = value
    elif param == "seed":
        upd.seed = int(value)
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    return upd


def expand_sweep(sweep: SweepConfig) -> list[ExperimentConfig]:
    """Grid of configs in deterministic axis-major order."""
    configs = [sweep.base]
    for axis in sweep.axes:
        nxt = []
        for cfg in configs:
            for value in axis.values:
                upd = _apply_axis(cfg, axis.param, value, axis.minislot_budget)
                upd.scenario_id = f"{cfg.scenario_id}/{axis.param}={value}"
                upd = ExperimentConfig.model_validate(upd.model_dump())
                nxt.append(upd)
        configs = nxt
    return configs


def run_sweep(sweep: SweepConfig, workers: int = 1) -> list[ResultRecord]:
    """One record per grid point, merged back in grid order."""
    configs = expand_sweep(sweep)
    axis_values = []
    for cfg in configs:
        vals = {}
        for part in cfg.scenario_id.split("/")[1:]:
            k, _, v = part.partition("=")
            vals[k] = v
        axis_values.append(vals)
    if workers <= 1 or len(configs) == 1:
        records = [run_experiment(cfg) for cfg in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_experiment, configs))
    for rec, vals in zip(records, axis_values):
        rec.axis_values = vals
    return records


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    if isinstance(value, (list, dict)):
        return json.dumps(value, separators=(",", ":"))
    return str(value)


def records_to_csv(records) -> str:
    """Stable schema: every column always present, empty cell means null."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        row = rec.model_dump()
        writer.writerow([_csv_cell(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def write_outputs(records, out_dir: Path, name: str = "results",
                  dump_traces=None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(records_to_csv(records))
    json_path = out_dir / f"{name}.json"
    json_path.write_text(json.dumps([r.model_dump() for r in records], indent=1))
    written = {"csv": str(csv_path), "json": str(json_path)}
    if dump_traces:
        trace_path = out_dir / f"{name}_trace.json"
        trace_path.write_text(json.dumps(dump_traces, indent=0))
        written["trace"] = str(trace_path)
    return written


def trace_dump(sim_traces) -> list:
    out = []
    for trace in sim_traces:
        out.append([
            {"slot": o.slot, "transmitter": o.transmitter, "outcome": o.outcome,
             "minislots": o.minislots_consumed, "contention": o.contention_entered,
             "alarm_mode": o.alarm_mode, "scheduled": o.scheduled}
            for o in trace
        ])
    return out


def list_recipes() -> list[str]:
    return sorted(p.stem for p in RECIPES_DIR.glob("*.json"))


def load_recipe(name: str) -> SweepConfig:
    path = RECIPES_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no recipe named {name!r}")
    return SweepConfig.model_validate_json(path.read_text())
