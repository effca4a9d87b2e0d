"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class NeoRequest(BaseModel):
    confidence: float = Field(gt=0.0, lt=1.0)
    epsilon: float = Field(gt=0.0, lt=1.0)


class NeoResponse(BaseModel):
    confidence: float
    epsilon: float
    samples: int


class DatasetPayload(BaseModel):
    name: str
    csv_text: str


class ColumnInfo(BaseModel):
    name: str
    kind: str
    role: str
    direction: str
    lo: float | None = None
    hi: float | None = None
    levels: list[str] | None = None


class ValidateResponse(BaseModel):
    name: str
    valid: bool
    errors: list[str] = []
    rows: int | None = None
    x_dims: int | None = None
    y_dims: int | None = None
    dimensionality: str | None = None
    columns: list[ColumnInfo] = []


class BackendSettings(BaseModel):
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    api_key_env: str = "MOOTBENCH_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    cache_dir: str | None = None
    temperature: float = 1.0


class ExperimentRequest(BaseModel):
    datasets: list[DatasetPayload]
    out_dir: str
    treatments: list[str] = [
        "synthcore",
        "ucb_gpm",
        "tpe",
        "exploit",
        "explore",
        "random",
        "baseline",
    ]
    budgets: list[int] = [20, 30, 50, 100]
    repeats: int = 20
    seed: int = 1
    backend: str = "surrogate"
    backend_settings: BackendSettings | None = None
    jobs: int = 1
    warm: int = 4
    examples_per_round: int = 3
    surrogate_jitter: float = 0.05


class RankTablePayload(BaseModel):
    budget: int
    stratum: str
    ranks: list[int]
    rows: list[tuple[str, list[int]]]
    markdown: str


class ExperimentSummary(BaseModel):
    out_dir: str
    config_hash: str
    cells: int
    failed_cells: int
    complete: bool
    envelope_violations: int
    rank_tables: list[RankTablePayload] = []
    curve_files: list[str] = []


class JobStatus(BaseModel):
    job_id: str
    status: str  # pending | running | done | failed
    error: str | None = None
    summary: ExperimentSummary | None = None


class RankRequest(BaseModel):
    out_dir: str
    seed: int | None = None


class RankResponse(BaseModel):
    tables: list[RankTablePayload]


class CurvesRequest(BaseModel):
    out_dir: str


class CurvesResponse(BaseModel):
    files: list[str]
