"""HTTP service wrapping the benchmark toolkit.

Quick operations (neo, validate, rank, curves) answer synchronously;
experiment runs execute as background jobs unless the caller asks to
wait.  Experiment outputs land on the service host's filesystem under
the requested output directory.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..backends import BackendConfig
from ..data import DataFormatError, load_table
from ..harness import (
    ExperimentConfig,
    ExperimentReport,
    classify_dimensionality,
    curves_report,
    rank_report,
    run_experiment,
)
from ..stats import RankTable, neo_samples
from .models import (
    ColumnInfo,
    CurvesRequest,
    CurvesResponse,
    DatasetPayload,
    ExperimentRequest,
    ExperimentSummary,
    HealthResponse,
    JobStatus,
    NeoRequest,
    NeoResponse,
    RankRequest,
    RankResponse,
    RankTablePayload,
    ValidateResponse,
)

app = FastAPI(title="mootbench", version=__version__)

_jobs: dict[str, JobStatus] = {}
_jobs_lock = threading.Lock()


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/neo", response_model=NeoResponse)
def neo(request: NeoRequest) -> NeoResponse:
    return NeoResponse(
        confidence=request.confidence,
        epsilon=request.epsilon,
        samples=neo_samples(request.confidence, request.epsilon),
    )


@app.post("/datasets/validate", response_model=ValidateResponse)
def validate(payload: DatasetPayload) -> ValidateResponse:
    try:
        table = load_table(payload.csv_text, name=payload.name)
    except DataFormatError as exc:
        return ValidateResponse(name=payload.name, valid=False, errors=[str(exc)])
    return ValidateResponse(
        name=payload.name,
        valid=True,
        rows=len(table.rows),
        x_dims=len(table.x_columns),
        y_dims=len(table.goal_columns),
        dimensionality=classify_dimensionality(table),
        columns=[
            ColumnInfo(
                name=c.name,
                kind=c.kind,
                role=c.role,
                direction=c.direction,
                lo=c.lo,
                hi=c.hi,
                levels=list(c.levels) if c.levels else None,
            )
            for c in table.columns
        ],
    )


def _to_config(request: ExperimentRequest) -> ExperimentConfig:
    backend_config = None
    if request.backend == "llm":
        settings = request.backend_settings
        if settings is None or not settings.cache_dir:
            raise HTTPException(
                status_code=422,
                detail="llm backend requires backend_settings with a cache_dir",
            )
        backend_config = BackendConfig(
            endpoint=settings.endpoint,
            model=settings.model,
            api_key_env=settings.api_key_env,
            timeout=settings.timeout,
            max_retries=settings.max_retries,
            cache_dir=settings.cache_dir,
            temperature=settings.temperature,
        )
    try:
        return ExperimentConfig(
            datasets=[(d.name, d.csv_text) for d in request.datasets],
            out_dir=request.out_dir,
            treatments=tuple(request.treatments),
            budgets=tuple(request.budgets),
            repeats=request.repeats,
            seed=request.seed,
            backend=request.backend,
            backend_config=backend_config,
            jobs=request.jobs,
            warm=request.warm,
            examples_per_round=request.examples_per_round,
            surrogate_jitter=request.surrogate_jitter,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None


def _table_payloads(tables: dict[tuple[int, str], RankTable]) -> list[RankTablePayload]:
    payloads = []
    for (budget, stratum), table in sorted(tables.items()):
        payloads.append(
            RankTablePayload(
                budget=budget,
                stratum=stratum,
                ranks=list(table.ranks),
                rows=[(name, list(cells)) for name, cells in table.rows],
                markdown=table.to_markdown(),
            )
        )
    return payloads


def _summarize(report: ExperimentReport) -> ExperimentSummary:
    curve_files = sorted(str(p) for p in report.out_dir.glob("curve_*.csv"))
    curve_files += [
        str(report.out_dir / name)
        for name in ("achieved.csv", "budget_scores.csv", "budget_times.csv")
        if (report.out_dir / name).exists()
    ]
    return ExperimentSummary(
        out_dir=str(report.out_dir),
        config_hash=report.manifest["config_hash"],
        cells=len(report.records),
        failed_cells=len(report.manifest["failures"]),
        complete=report.manifest["complete"],
        envelope_violations=len(report.manifest["envelope_violations"]),
        rank_tables=_table_payloads(report.rank_tables),
        curve_files=curve_files,
    )


def _execute_job(job_id: str, config: ExperimentConfig) -> None:
    with _jobs_lock:
        _jobs[job_id].status = "running"
    try:
        report = run_experiment(config)
        summary = _summarize(report)
        with _jobs_lock:
            _jobs[job_id].status = "done"
            _jobs[job_id].summary = summary
    except Exception as exc:
        with _jobs_lock:
            _jobs[job_id].status = "failed"
            _jobs[job_id].error = f"{type(exc).__name__}: {exc}"


@app.post("/experiments", response_model=JobStatus)
def start_experiment(request: ExperimentRequest, wait: bool = False) -> JobStatus:
    config = _to_config(request)
    job_id = uuid.uuid4().hex
    with _jobs_lock:
        _jobs[job_id] = JobStatus(job_id=job_id, status="pending")
    if wait:
        _execute_job(job_id, config)
        with _jobs_lock:
            return _jobs[job_id]
    thread = threading.Thread(target=_execute_job, args=(job_id, config), daemon=True)
    thread.start()
    with _jobs_lock:
        return _jobs[job_id].model_copy()


@app.get("/experiments/{job_id}", response_model=JobStatus)
def experiment_status(job_id: str) -> JobStatus:
    with _jobs_lock:
        status = _jobs.get(job_id)
        if status is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return status.model_copy()


@app.post("/rank", response_model=RankResponse)
def rank(request: RankRequest) -> RankResponse:
    try:
        tables = rank_report(request.out_dir, seed=request.seed)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None
    return RankResponse(tables=_table_payloads(tables))


@app.post("/curves", response_model=CurvesResponse)
def curves(request: CurvesRequest) -> CurvesResponse:
    try:
        files = curves_report(request.out_dir)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    return CurvesResponse(files=[str(f) for f in files])
