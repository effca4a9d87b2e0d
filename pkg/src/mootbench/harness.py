"""Experiment orchestration.

Runs the (dataset x treatment x budget x repeat) matrix with per-cell
seeds derived from a master seed, persists one line-delimited record per
cell, and aggregates Scott-Knott ranks into percentage tables per
dimensionality stratum.  Wall times live in a separate file so the result
records are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean

import numpy as np

from . import __version__
from .backends import BackendConfig, LlmBackend, SurrogateBackend
from .data import Table, load_table, shuffle_rows
from .gpm import UcbPolicy
from .learners import ExploitPolicy, ExplorePolicy, RandomPolicy, RunResult, run_loop
from .scoring import pool_scores
from .stats import RankGroup, RankTable, TreatmentSamples, rank_table, scott_knott
from .synthcore import plan_budget, run_synthcore
from .tpe import TpePolicy

logger = logging.getLogger(__name__)

TREATMENTS = ("synthcore", "ucb_gpm", "tpe", "exploit", "explore", "random", "baseline")
STRATA = ("low", "medium", "high")

_POLICIES = {
    "random": RandomPolicy,
    "exploit": ExploitPolicy,
    "explore": ExplorePolicy,
    "ucb_gpm": UcbPolicy,
    "tpe": TpePolicy,
}


def classify_dimensionality(table: Table) -> str:
    """low: |x| < 6, medium: 6 <= |x| <= 11, high: |x| > 11."""
    dims = len(table.x_columns)
    if dims < 6:
        return "low"
    if dims <= 11:
        return "medium"
    return "high"


@dataclass
class ExperimentConfig:
    datasets: list[tuple[str, str]]  # (name, csv text)
    out_dir: str | Path
    treatments: tuple[str, ...] = TREATMENTS
    budgets: tuple[int, ...] = (20, 30, 50, 100)
    repeats: int = 20
    seed: int = 1
    backend: str = "surrogate"
    backend_config: BackendConfig | None = None
    jobs: int = 1
    warm: int = 4
    examples_per_round: int = 3
    surrogate_jitter: float = 0.05

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.budgets:
            raise ValueError("budgets must be non-empty")
        if not self.datasets:
            raise ValueError("no datasets configured")
        unknown = set(self.treatments) - set(TREATMENTS)
        if unknown:
            raise ValueError(f"unknown treatments: {sorted(unknown)}")
        if self.backend not in ("surrogate", "llm"):
            raise ValueError(f"backend must be surrogate or llm, got {self.backend!r}")

    def content_hash(self) -> str:
        """Hash of experiment content; where outputs land and how many
        workers run are execution details and excluded."""
        payload = {
            "datasets": [
                (name, hashlib.sha256(text.encode("utf-8")).hexdigest())
                for name, text in self.datasets
            ],
            "treatments": list(self.treatments),
            "budgets": list(self.budgets),
            "repeats": self.repeats,
            "seed": self.seed,
            "backend": self.backend,
            "backend_config": None
            if self.backend_config is None
            else {
                "endpoint": self.backend_config.endpoint,
                "model": self.backend_config.model,
                "temperature": self.backend_config.temperature,
            },
            "warm": self.warm,
            "examples_per_round": self.examples_per_round,
            "surrogate_jitter": self.surrogate_jitter,
        }
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ExperimentReport:
    out_dir: Path
    records: list[dict]
    rank_tables: dict[tuple[int, str], RankTable]
    manifest: dict
    timings: list[dict] = field(default_factory=list)


def derive_seed(master: int, dataset: str, treatment: str, budget: int, repeat: int) -> int:
    """Per-cell seed; distinct cells get distinct seeds for any fixed master."""
    key = "\x1f".join([str(master), dataset, treatment, str(budget), str(repeat)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _make_backend(cfg: ExperimentConfig):
    if cfg.backend == "llm":
        if cfg.backend_config is None:
            raise ValueError("llm backend requires a BackendConfig")
        return LlmBackend(cfg.backend_config)
    return SurrogateBackend(jitter_scale=cfg.surrogate_jitter)


def run_cell(
    table: Table, treatment: str, budget: int, seed: int, backend, cfg: ExperimentConfig
) -> RunResult:
    """One run on a freshly shuffled private copy of the dataset."""
    shuffled = shuffle_rows(table, seed)
    if treatment == "baseline":
        start = time.perf_counter()
        mean_score = fmean(pool_scores(shuffled))
        return RunResult(
            best_row_id=None,
            best_score=mean_score,
            labels_spent=0,
            trace=[],
            wall_time=time.perf_counter() - start,
        )
    if treatment == "synthcore":
        plan = plan_budget(budget, cfg.examples_per_round, seed=seed)
        return run_synthcore(shuffled, backend, plan)
    policy = _POLICIES[treatment]()
    return run_loop(shuffled, policy, budget, warm=cfg.warm, seed=seed)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the full matrix, persist records/tables/curves, return the report."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {name: load_table(text, name=name) for name, text in cfg.datasets}
    backend = _make_backend(cfg)

    cells = [
        (ds, treatment, budget, repeat)
        for ds in sorted(tables)
        for treatment in cfg.treatments
        for budget in cfg.budgets
        for repeat in range(cfg.repeats)
    ]

    def execute(cell):
        ds, treatment, budget, repeat = cell
        seed = derive_seed(cfg.seed, ds, treatment, budget, repeat)
        record = {
            "dataset": ds,
            "treatment": treatment,
            "budget": budget,
            "repeat": repeat,
            "seed": seed,
            "status": "ok",
        }
        wall = 0.0
        try:
            result = run_cell(tables[ds], treatment, budget, seed, backend, cfg)
            record.update(
                best_row_id=result.best_row_id,
                best_score=result.best_score,
                labels_spent=result.labels_spent,
                trace=[list(t) for t in result.trace],
            )
            wall = result.wall_time
        except Exception as exc:  # cell failures are recorded, not fatal
            logger.warning("cell %s failed: %s", cell, exc)
            record["status"] = "failed"
            record["error"] = f"{type(exc).__name__}: {exc}"
        return record, {"dataset": ds, "treatment": treatment, "budget": budget,
                        "repeat": repeat, "wall_time": wall}

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(execute, cells))
    else:
        outcomes = [execute(cell) for cell in cells]

    records = sorted(
        (rec for rec, _ in outcomes),
        key=lambda r: (r["dataset"], r["treatment"], r["budget"], r["repeat"]),
    )
    timings = sorted(
        (t for _, t in outcomes),
        key=lambda t: (t["dataset"], t["treatment"], t["budget"], t["repeat"]),
    )

    profiles = {}
    for name, table in tables.items():
        scores = sorted(pool_scores(table))
        profiles[name] = {
            "rows": len(scores),
            "x_dims": len(table.x_columns),
            "y_dims": len(table.goal_columns),
            "dimensionality": classify_dimensionality(table),
            "pool_min": scores[0],
            "pool_mean": fmean(scores),
            "scores_sorted": scores,
        }

    envelope_violations = _check_envelope(records, profiles)
    failures = [r for r in records if r["status"] == "failed"]

    rank_tables, rank_notes = _rank_all(records, profiles, cfg.seed)

    manifest = {
        "config_hash": cfg.content_hash(),
        "master_seed": cfg.seed,
        "package_version": __version__,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "treatments": list(cfg.treatments),
        "budgets": list(cfg.budgets),
        "repeats": cfg.repeats,
        "backend": cfg.backend,
        "datasets": {
            name: {k: v for k, v in prof.items() if k != "scores_sorted"}
            for name, prof in profiles.items()
        },
        "cache": {
            "hits": getattr(backend, "cache_hits", 0),
            "misses": getattr(backend, "cache_misses", 0),
        },
        "complete": not failures,
        "failures": [
            {k: r[k] for k in ("dataset", "treatment", "budget", "repeat", "error")}
            for r in failures
        ],
        "envelope_violations": envelope_violations,
        "rank_notes": rank_notes,
    }

    _write_jsonl(out_dir / "results.jsonl", records)
    _write_timings(out_dir / "timings.csv", timings)
    (out_dir / "pool_profiles.json").write_text(
        json.dumps(profiles, sort_keys=True), encoding="utf-8"
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    _write_rank_tables(out_dir, rank_tables)

    report = ExperimentReport(
        out_dir=out_dir,
        records=records,
        rank_tables=rank_tables,
        manifest=manifest,
        timings=timings,
    )
    if any(r["status"] == "ok" for r in records):
        emit_curves(report, profiles)
    return report


def _check_envelope(records: list[dict], profiles: dict) -> list[dict]:
    """Pool-minimum <= best_score must always hold; best_score <= pool-mean
    should hold for real policies.  Violations are reported, never clipped."""
    violations = []
    for rec in records:
        if rec["status"] != "ok" or rec["treatment"] == "baseline":
            continue
        prof = profiles[rec["dataset"]]
        if rec["best_score"] < prof["pool_min"] - 1e-12:
            violations.append({**_cell_key(rec), "kind": "below_pool_minimum"})
        if rec["best_score"] > prof["pool_mean"] + 1e-12:
            violations.append({**_cell_key(rec), "kind": "above_pool_mean"})
    return violations


def _cell_key(rec: dict) -> dict:
    return {k: rec[k] for k in ("dataset", "treatment", "budget", "repeat")}


def _rank_all(records: list[dict], profiles: dict, master_seed: int):
    """Scott-Knott per (dataset, budget), aggregated per stratum and overall."""
    notes = []
    by_budget_dataset: dict[tuple[int, str], dict[str, list[float]]] = {}
    for rec in records:
        if rec["status"] != "ok":
            continue
        cell = by_budget_dataset.setdefault((rec["budget"], rec["dataset"]), {})
        cell.setdefault(rec["treatment"], []).append(rec["best_score"])

    groups_per_budget: dict[int, dict[str, list[RankGroup]]] = {}
    for (budget, dataset), per_treatment in sorted(by_budget_dataset.items()):
        short = {t: v for t, v in per_treatment.items() if len(v) < 2}
        if short:
            notes.append(
                f"B={budget} {dataset}: skipped ranking, <2 repeats for {sorted(short)}"
            )
            continue
        rng = np.random.default_rng(derive_seed(master_seed, dataset, "scott_knott", budget, 0))
        treatments = [
            TreatmentSamples(name=t, values=tuple(v)) for t, v in sorted(per_treatment.items())
        ]
        groups_per_budget.setdefault(budget, {})[dataset] = scott_knott(treatments, rng=rng)

    tables: dict[tuple[int, str], RankTable] = {}
    for budget, per_dataset in groups_per_budget.items():
        strata: dict[str, dict[str, list[RankGroup]]] = {}
        for dataset, groups in per_dataset.items():
            stratum = profiles[dataset]["dimensionality"]
            strata.setdefault(stratum, {})[dataset] = groups
        for stratum, subset in strata.items():
            tables[(budget, stratum)] = rank_table(subset)
        tables[(budget, "all")] = rank_table(per_dataset)
    return tables, notes


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(json.dumps(rec, sort_keys=True) + "\n")


def _write_timings(path: Path, timings: list[dict]) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["dataset", "treatment", "budget", "repeat", "wall_time"])
        for t in timings:
            writer.writerow(
                [t["dataset"], t["treatment"], t["budget"], t["repeat"], f"{t['wall_time']:.6f}"]
            )


def _write_rank_tables(out_dir: Path, tables: dict[tuple[int, str], RankTable]) -> None:
    for (budget, stratum), table in tables.items():
        stem = out_dir / f"rank_B{budget}_{stratum}"
        stem.with_suffix(".csv").write_text(table.to_csv(), encoding="utf-8")
        stem.with_suffix(".md").write_text(table.to_markdown(), encoding="utf-8")


def emit_curves(report: ExperimentReport, profiles: dict | None = None) -> list[Path]:
    """Write the three curve CSVs: per-dataset optimal/mean profile with
    per-treatment achieved scores, budget-vs-score, budget-vs-wall-time."""
    out_dir = report.out_dir
    if profiles is None:
        profiles = json.loads((out_dir / "pool_profiles.json").read_text(encoding="utf-8"))
    ok = [r for r in report.records if r["status"] == "ok"]
    if not ok:
        raise ValueError("empty report: no successful cells to plot")
    written = []

    # (a) per-dataset profile: the sorted score distribution, its running
    # minimum, and the pool mean, one row per pool position.
    for dataset, prof in sorted(profiles.items()):
        lines = ["position,sorted_score,cumulative_best,pool_mean"]
        running = None
        for i, score in enumerate(prof["scores_sorted"], start=1):
            running = score if running is None else min(running, score)
            lines.append(f"{i},{score!r},{running!r},{prof['pool_mean']!r}")
        path = out_dir / f"curve_{dataset}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)

    # (a, continued) achieved scores per treatment against the envelope.
    by_cell: dict[tuple[str, str, int], list[float]] = {}
    for rec in ok:
        by_cell.setdefault((rec["dataset"], rec["treatment"], rec["budget"]), []).append(
            rec["best_score"]
        )
    lines = ["dataset,treatment,budget,mean_best_score,pool_min,pool_mean"]
    for (dataset, treatment, budget), scores in sorted(by_cell.items()):
        prof = profiles[dataset]
        lines.append(
            f"{dataset},{treatment},{budget},{fmean(scores)!r},"
            f"{prof['pool_min']!r},{prof['pool_mean']!r}"
        )
    path = out_dir / "achieved.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)

    # (b) budget vs mean best score per treatment, unweighted across
    # datasets and repeats, plus the mean pool optimum as "optimal".
    by_tb: dict[tuple[str, int], list[float]] = {}
    budgets = sorted({rec["budget"] for rec in ok})
    for rec in ok:
        by_tb.setdefault((rec["treatment"], rec["budget"]), []).append(rec["best_score"])
    mean_optimum = fmean(p["pool_min"] for p in profiles.values())
    lines = ["treatment,budget,mean_best_score"]
    for (treatment, budget), scores in sorted(by_tb.items()):
        lines.append(f"{treatment},{budget},{fmean(scores)!r}")
    for budget in budgets:
        lines.append(f"optimal,{budget},{mean_optimum!r}")
    path = out_dir / "budget_scores.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)

    # (c) budget vs mean wall time per treatment (plot on a log scale).
    by_tb_time: dict[tuple[str, int], list[float]] = {}
    for t in report.timings:
        by_tb_time.setdefault((t["treatment"], t["budget"]), []).append(t["wall_time"])
    lines = ["treatment,budget,mean_wall_time_seconds"]
    for (treatment, budget), times in sorted(by_tb_time.items()):
        lines.append(f"{treatment},{budget},{fmean(times)!r}")
    path = out_dir / "budget_times.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    return written


def load_report(out_dir: str | Path) -> ExperimentReport:
    """Rehydrate a persisted report for re-ranking or curve re-emission."""
    out_dir = Path(out_dir)
    records = [
        json.loads(line)
        for line in (out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()
        if line
    ]
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    timings = []
    timing_path = out_dir / "timings.csv"
    if timing_path.exists():
        import csv

        with open(timing_path, newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                timings.append(
                    {
                        "dataset": row["dataset"],
                        "treatment": row["treatment"],
                        "budget": int(row["budget"]),
                        "repeat": int(row["repeat"]),
                        "wall_time": float(row["wall_time"]),
                    }
                )
    return ExperimentReport(
        out_dir=out_dir, records=records, rank_tables={}, manifest=manifest, timings=timings
    )


def rank_report(out_dir: str | Path, seed: int | None = None) -> dict[tuple[int, str], RankTable]:
    """Re-rank persisted results; identical tables for an unchanged out dir."""
    report = load_report(out_dir)
    profiles = json.loads(
        (Path(out_dir) / "pool_profiles.json").read_text(encoding="utf-8")
    )
    master = report.manifest["master_seed"] if seed is None else seed
    tables, _ = _rank_all(report.records, profiles, master)
    _write_rank_tables(Path(out_dir), tables)
    return tables


def curves_report(out_dir: str | Path) -> list[Path]:
    """Re-emit curve CSVs from persisted results."""
    return emit_curves(load_report(out_dir))
