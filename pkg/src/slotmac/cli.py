"""Command-line client for the experiment runner.

Runs locally by default (in-process library calls); with --server URL every
command becomes a thin HTTP client of a running service, exchanging the same
JSON documents.  Exit codes: 0 success, 2 validation error (machine-readable
JSON on stderr), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import experiments
from .config import ExperimentConfig, SweepConfig


def _fail_validation(detail) -> int:
    print(json.dumps({"error": "validation", "detail": detail}), file=sys.stderr)
    return 2


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _parse_config(doc: dict):
    """A config file may hold a single experiment or a sweep."""
    if "base" in doc:
        return SweepConfig.model_validate(doc)
    return ExperimentConfig.model_validate(doc)


def _client(server: str):
    import httpx

    return httpx.Client(base_url=server, timeout=600.0)


def cmd_validate(args) -> int:
    doc = _load_json(args.config)
    if args.server:
        with _client(args.server) as client:
            target = doc.get("base", doc)
            resp = client.post("/experiments/validate", json=target)
            resp.raise_for_status()
            report = resp.json()
        if not report["valid"]:
            return _fail_validation(report["issues"])
        print(json.dumps(report))
        return 0
    try:
        _parse_config(doc)
    except ValidationError as exc:
        return _fail_validation(json.loads(exc.json()))
    print(json.dumps({"valid": True}))
    return 0


def _apply_overrides(doc: dict, args) -> dict:
    target = doc.get("base", doc)
    if args.seed is not None:
        target["seed"] = args.seed
    if getattr(args, "dump_trace", False):
        target["dump_trace"] = True
    return doc


def cmd_run(args) -> int:
    doc = _apply_overrides(_load_json(args.config), args)
    if "base" in doc:
        return _run_sweep_doc(doc, args)
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        return _fail_validation(json.loads(exc.json()))
    if args.server:
        with _client(args.server) as client:
            resp = client.post("/experiments/run", json=cfg.model_dump())
            if resp.status_code == 422:
                return _fail_validation(resp.json())
            resp.raise_for_status()
            from .config import ResultRecord
            rec = ResultRecord.model_validate(resp.json()["record"])
            traces = None
    else:
        rec, traces = experiments.run_experiment_with_traces(cfg)
    dump = experiments.trace_dump(traces) if (traces and cfg.dump_trace) else None
    written = experiments.write_outputs([rec], Path(args.out), name=args.name,
                                        dump_traces=dump)
    print(json.dumps({"written": written, "records": 1}))
    return 0


def _run_sweep_doc(doc: dict, args) -> int:
    try:
        sweep = SweepConfig.model_validate(doc)
    except ValidationError as exc:
        return _fail_validation(json.loads(exc.json()))
    if args.server:
        with _client(args.server) as client:
            resp = client.post("/sweeps/run",
                               json={"sweep": sweep.model_dump(), "workers": args.workers})
            if resp.status_code == 422:
                return _fail_validation(resp.json())
            resp.raise_for_status()
            from .config import ResultRecord
            records = [ResultRecord.model_validate(r) for r in resp.json()["records"]]
    else:
        records = experiments.run_sweep(sweep, workers=args.workers)
    written = experiments.write_outputs(records, Path(args.out), name=args.name)
    print(json.dumps({"written": written, "records": len(records)}))
    return 0


def cmd_sweep(args) -> int:
    doc = _apply_overrides(_load_json(args.config), args)
    if "base" not in doc:
        return _fail_validation("sweep command needs a sweep config with a 'base'")
    return _run_sweep_doc(doc, args)


def cmd_recipe(args) -> int:
    if args.action == "list":
        names = experiments.list_recipes()
        print(json.dumps({"recipes": names}))
        return 0
    if args.server:
        with _client(args.server) as client:
            resp = client.post(f"/recipes/{args.name}/run",
                               params={"workers": args.workers})
            if resp.status_code == 404:
                print(json.dumps({"error": "unknown recipe"}), file=sys.stderr)
                return 1
            resp.raise_for_status()
            from .config import ResultRecord
            records = [ResultRecord.model_validate(r) for r in resp.json()["records"]]
    else:
        try:
            sweep = experiments.load_recipe(args.name)
        except FileNotFoundError:
            print(json.dumps({"error": "unknown recipe"}), file=sys.stderr)
            return 1
        if args.seed is not None:
            sweep.base.seed = args.seed
        records = experiments.run_sweep(sweep, workers=args.workers)
    written = experiments.write_outputs(records, Path(args.out), name=args.name)
    print(json.dumps({"written": written, "records": len(records)}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slotmac",
                                     description="hybrid MAC scheduling simulator")
    parser.add_argument("--server", help="base URL of a running service; "
                        "commands become HTTP calls")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config file")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(fn=cmd_validate)

    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} an experiment config")
        p.add_argument("-c", "--config", required=True)
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--name", default="results", help="output file stem")
        p.add_argument("--dump-trace", action="store_true",
                       help="also write the per-slot event trace (large)")
        p.set_defaults(fn=fn)

    p = sub.add_parser("recipe", help="list or run committed recipes")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("name", nargs="?")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_recipe)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "recipe" and args.action == "run" and not args.name:
        print(json.dumps({"error": "recipe run needs a name"}), file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": "not-found", "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
