"""Request/response models specific to the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel

from ..config import ExperimentConfig, ResultRecord, SweepConfig  # noqa: F401


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidationIssue(BaseModel):
    location: str
    message: str


class ValidationReport(BaseModel):
    valid: bool
    issues: list[ValidationIssue] = []


class RunResponse(BaseModel):
    record: ResultRecord


class SweepRequest(BaseModel):
    sweep: SweepConfig
    workers: int = 1


class SweepResponse(BaseModel):
    records: list[ResultRecord]
    csv: str


class RecipeList(BaseModel):
    recipes: list[str]


class JobRequest(BaseModel):
    kind: Literal["run", "sweep", "recipe"]
    experiment: Optional[ExperimentConfig] = None
    sweep: Optional[SweepConfig] = None
    recipe: Optional[str] = None
    workers: int = 1


class JobStatus(BaseModel):
    job_id: str
    state: Literal["pending", "running", "done", "failed"]
    detail: Optional[str] = None


class JobResult(BaseModel):
    job_id: str
    state: str
    records: Optional[list[ResultRecord]] = None
    error: Optional[str] = None


class CapacityRequest(BaseModel):
    rates: list[float]
    fading: Optional[list[float]] = None


class CapacityResponse(BaseModel):
    load: float
    interior: bool
    in_leq_region: bool


class Gxd1Response(BaseModel):
    n: int
    lam: float
    mean_delay: float


class FairnessRequest(BaseModel):
    shares: list[float]


class FairnessResponse(BaseModel):
    jain_index: float
