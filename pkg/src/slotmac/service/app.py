"""HTTP service wrapping the simulator: validation, runs, sweeps, recipes.

Runs and sweeps execute synchronously on the request path; long sweeps can be
submitted as background jobs and polled.  Results are deterministic for a
fixed seed regardless of transport.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from .. import experiments, metrics, verify
from ..core import ArrivalSpec, capacity_check
from ..config import ExperimentConfig
from . import schemas

VERSION = "0.1.0"


class JobRegistry:
    def __init__(self, workers: int = 2):
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._lock = threading.Lock()
        self._jobs = {}

    def submit(self, fn) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"state": "pending", "records": None, "error": None}

        def wrapped():
            with self._lock:
                self._jobs[job_id]["state"] = "running"
            try:
                records = fn()
                with self._lock:
                    self._jobs[job_id].update(state="done", records=records)
            except Exception as exc:  # surfaced through the result endpoint
                with self._lock:
                    self._jobs[job_id].update(state="failed", error=str(exc))

        self._pool.submit(wrapped)
        return job_id

    def get(self, job_id: str):
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job is not None else None


def _validation_report(exc: ValidationError) -> schemas.ValidationReport:
    issues = []
    for err in exc.errors():
        location = ".".join(str(p) for p in err["loc"]) or "config"
        msg = err["msg"].removeprefix("Value error, ")
        # the config validator reports every violated constraint joined by ';'
        for part in msg.split("; "):
            issues.append(schemas.ValidationIssue(location=location, message=part))
    return schemas.ValidationReport(valid=False, issues=issues)


def create_app() -> FastAPI:
    app = FastAPI(title="slotmac", version=VERSION,
                  description="Minislot-accurate hybrid MAC scheduling simulator")
    jobs = JobRegistry()

    @app.get("/healthz", response_model=schemas.HealthResponse)
    def healthz():
        return schemas.HealthResponse(status="ok", version=VERSION)

    @app.post("/experiments/validate", response_model=schemas.ValidationReport)
    def validate(config: dict):
        try:
            ExperimentConfig.model_validate(config)
        except ValidationError as exc:
            return _validation_report(exc)
        return schemas.ValidationReport(valid=True)

    @app.post("/experiments/run", response_model=schemas.RunResponse)
    def run(config: ExperimentConfig):
        record = experiments.run_experiment(config)
        return schemas.RunResponse(record=record)

    @app.post("/sweeps/run", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        records = experiments.run_sweep(req.sweep, workers=req.workers)
        return schemas.SweepResponse(records=records,
                                     csv=experiments.records_to_csv(records))

    @app.get("/recipes", response_model=schemas.RecipeList)
    def recipes():
        return schemas.RecipeList(recipes=experiments.list_recipes())

    @app.post("/recipes/{name}/run", response_model=schemas.SweepResponse)
    def run_recipe(name: str, workers: int = 1):
        try:
            sweep_cfg = experiments.load_recipe(name)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        records = experiments.run_sweep(sweep_cfg, workers=workers)
        return schemas.SweepResponse(records=records,
                                     csv=experiments.records_to_csv(records))

    @app.post("/jobs", response_model=schemas.JobStatus)
    def submit_job(req: schemas.JobRequest):
        if req.kind == "run":
            if req.experiment is None:
                raise HTTPException(status_code=422, detail="run job needs an experiment")
            cfg = req.experiment
            fn = lambda: [experiments.run_experiment(cfg)]
        elif req.kind == "sweep":
            if req.sweep is None:
                raise HTTPException(status_code=422, detail="sweep job needs a sweep")
            sw, workers = req.sweep, req.workers
            fn = lambda: experiments.run_sweep(sw, workers=workers)
        else:
            if req.recipe is None:
                raise HTTPException(status_code=422, detail="recipe job needs a name")
            name, workers = req.recipe, req.workers
            fn = lambda: experiments.run_sweep(experiments.load_recipe(name),
                                               workers=workers)
        job_id = jobs.submit(fn)
        return schemas.JobStatus(job_id=job_id, state="pending")

    @app.get("/jobs/{job_id}", response_model=schemas.JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return schemas.JobStatus(job_id=job_id, state=job["state"], detail=job["error"])

    @app.get("/jobs/{job_id}/result", response_model=schemas.JobResult)
    def job_result(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return schemas.JobResult(job_id=job_id, state=job["state"],
                                 records=job["records"], error=job["error"])

    @app.post("/analysis/capacity", response_model=schemas.CapacityResponse)
    def capacity(req: schemas.CapacityRequest):
        try:
            report = capacity_check(ArrivalSpec.of(req.rates), req.fading)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return schemas.CapacityResponse(load=report.load, interior=report.interior,
                                        in_leq_region=report.in_leq_region)

    @app.get("/analysis/gxd1", response_model=schemas.Gxd1Response)
    def gxd1(n: int, lam: float):
        try:
            value = verify.gxd1_delay(verify.Gxd1Params(n=n, lam=lam))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return schemas.Gxd1Response(n=n, lam=lam, mean_delay=value)

    @app.post("/analysis/fairness", response_model=schemas.FairnessResponse)
    def fairness(req: schemas.FairnessRequest):
        try:
            value = metrics.fairness_index(req.shares)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return schemas.FairnessResponse(jain_index=value)

    return app


app = create_app()
