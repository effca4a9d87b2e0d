"""Ensemble-of-independent-synthesis-sessions treatment.

A run spends its label budget B as L warm random labels plus M rounds of
(N freshly sampled labels + 1 guided label): B = L + M*(N+1).  Each round
is a context-free session: it shows a backend the dataset's column
statistics and its own N examples split half Best / half Rest, asks for a
better example, then labels the unlabeled row nearest the synthetic
answer.  The best of all labeled rows (by distance-to-heaven) wins.

Rounds never see each other's prompts or replies; the column statistics
are frozen after the warm start so every round renders against the same
metadata.
"""

from __future__ import annotations

import logging
import math
import random
import statistics
import time
from collections import Counter
from dataclasses import dataclass

from .backends import SchemaColumn, SynthesisError, SynthesisRequest, SyntheticRow
from .data import GOAL, NUMERIC, ColumnSpec, Row, Table, format_number, symbol_modes
from .learners import LabelLedger, RunResult
from .scoring import best_rest_split, ideal_point, score_row

logger = logging.getLogger(__name__)

DEFAULT_EXAMPLES_PER_ROUND = 3
WARM_FRACTION = 0.6
PARSE_RETRIES = 2

SYSTEM_HEADER = (
    'You are given a dataset with several features. The rows have been '
    'categorized into "Best" and "Rest" examples based on their overall '
    'performance. Below are the key features and their descriptions from '
    'the dataset:\n'
    '...\n'
)

TASK_TEMPLATE = (
    'Generate an examples that is Better:\n'
    'This should outperform the given "Best" examples by optimizing the '
    'relevant features to better combinations.\n'
    '\n'
    'Consider the inter-dependencies between features, and ensure that the '
    'generated examples follow logical consistency within the dataset\'s '
    'context.\n'
    '\n'
    'Return the output in the same markdown structure: a single markdown '
    'table row containing only the values of {x_names}, in that order.'
)


@dataclass(frozen=True)
class SynthConfig:
    """Budget plan: budget = warm_labels + rounds * (examples_per_round + 1)."""

    budget: int
    warm_labels: int
    rounds: int
    examples_per_round: int
    seed: int = 0

    def __post_init__(self):
        b, l, m, n = self.budget, self.warm_labels, self.rounds, self.examples_per_round
        if l < 2:
            raise ValueError(f"warm start needs at least 2 labels, got {l}")
        if m < 1:
            raise ValueError(f"need at least 1 round, got {m}")
        if n < 2:
            raise ValueError(f"need at least 2 examples per round, got {n}")
        if b != l + m * (n + 1):
            raise ValueError(
                f"budget identity violated: {b} != {l} + {m}*({n}+1)"
            )


@dataclass(frozen=True)
class PromptBundle:
    """Rendered ingredients of one prompt: column statistics, the round's
    tagged examples, and the x header for the reply-format instruction."""

    meta_markdown: str
    examples_markdown: str
    x_names: tuple[str, ...]


def plan_budget(
    budget: int, examples_per_round: int = DEFAULT_EXAMPLES_PER_ROUND, seed: int = 0
) -> SynthConfig:
    """Derive (warm, rounds) from a total budget: rounds take at most 40%
    of the budget (at least one), the warm start gets the remainder."""
    n = examples_per_round
    if budget < 10:
        raise ValueError(f"budget {budget} below the minimum of 10")
    if budget < n + 3:
        raise ValueError(
            f"budget {budget} cannot afford one round of {n}+1 labels plus a 2-label warm start"
        )
    rounds = max(1, math.floor((1.0 - WARM_FRACTION) * budget / (n + 1)))
    warm = budget - rounds * (n + 1)
    return SynthConfig(
        budget=budget,
        warm_labels=warm,
        rounds=rounds,
        examples_per_round=n,
        seed=seed,
    )


def _entropy_bits(values) -> float:
    counts = Counter(values)
    total = sum(counts.values())
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def _markdown_table(header: list[str], body: list[list[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(" --- " for _ in header) + "|",
    ]
    for row in body:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def build_meta(table: Table) -> str:
    """Markdown statistics per column: name, min, max, mean or mode,
    sd or entropy.  x columns use every row (x cells are public); goal
    columns use labeled rows only."""
    body = []
    x_pos = 0
    y_pos = 0
    labeled = [r for r in table.rows if r.labeled]
    for col in table.columns:
        if col.role == GOAL:
            values = [r.y[y_pos] for r in labeled]
            y_pos += 1
        else:
            values = [r.x[x_pos] for r in table.rows]
            x_pos += 1
        if not values:
            body.append([col.name, "", "", "", ""])
            continue
        if col.kind == NUMERIC:
            body.append(
                [
                    col.name,
                    format_number(min(values)),
                    format_number(max(values)),
                    format_number(statistics.fmean(values)),
                    format_number(statistics.pstdev(values) if len(values) > 1 else 0.0),
                ]
            )
        else:
            counts = Counter(values)
            mode = max(sorted(counts), key=lambda lvl: counts[lvl])
            body.append(
                [col.name, min(values), max(values), mode, format_number(_entropy_bits(values))]
            )
    return _markdown_table(["name", "min", "max", "mean_or_mode", "sd_or_entropy"], body)


def _format_x(row: Row, x_cols: tuple[ColumnSpec, ...]) -> list[str]:
    return [
        format_number(v) if col.kind == NUMERIC else str(v)
        for v, col in zip(row.x, x_cols)
    ]


def build_examples(best: list[Row], rest: list[Row], table: Table) -> str:
    """Markdown table of the round's labeled examples, Best rows first."""
    x_cols = table.x_columns
    goal_cols = table.goal_columns
    header = ["class"] + [c.name for c in x_cols] + [c.name for c in goal_cols]
    body = []
    for tag, rows in (("Best", best), ("Rest", rest)):
        for row in rows:
            body.append([tag] + _format_x(row, x_cols) + [format_number(v) for v in row.y])
    return _markdown_table(header, body)


def build_bundle(table: Table, best: list[Row], rest: list[Row], meta: str | None = None) -> PromptBundle:
    return PromptBundle(
        meta_markdown=meta if meta is not None else build_meta(table),
        examples_markdown=build_examples(best, rest, table),
        x_names=tuple(c.name for c in table.x_columns),
    )


def render_prompt(bundle: PromptBundle) -> tuple[str, str, str]:
    """The three message texts of one synthesis session."""
    system = SYSTEM_HEADER + bundle.meta_markdown
    human = "Given Examples:\n\n" + bundle.examples_markdown
    task = TASK_TEMPLATE.format(x_names=", ".join(bundle.x_names))
    return system, human, task


def build_schema(table: Table) -> tuple[SchemaColumn, ...]:
    """Reply-parsing contract for the table's independent columns."""
    modes = symbol_modes(table)
    schema = []
    for col in table.x_columns:
        if col.kind == NUMERIC:
            schema.append(SchemaColumn(name=col.name, kind=col.kind, lo=col.lo, hi=col.hi))
        else:
            schema.append(
                SchemaColumn(
                    name=col.name,
                    kind=col.kind,
                    levels=col.levels or (),
                    mode=modes.get(col.name),
                )
            )
    return tuple(schema)


def nearest_row(pool: list[Row], synthetic: SyntheticRow, x_cols: tuple[ColumnSpec, ...]) -> int:
    """Pool row closest to the synthetic x: numeric dims compare as
    |delta| / (hi - lo), symbolic dims as 0/1 mismatch, aggregated as a
    Euclidean norm scaled by 1/sqrt(dims).  Ties break by row id."""
    if not pool:
        raise ValueError("empty pool")
    d = len(x_cols)
    scored = []
    for row in pool:
        total = 0.0
        for pos, col in enumerate(x_cols):
            if col.kind == NUMERIC:
                span = (col.hi - col.lo) if col.hi is not None and col.lo is not None else 0.0
                if span > 0:
                    total += ((row.x[pos] - synthetic.x[pos]) / span) ** 2
            else:
                total += 0.0 if row.x[pos] == synthetic.x[pos] else 1.0
        scored.append((math.sqrt(total) / math.sqrt(d), row.id))
    return min(scored)[1]


def synthesize_round(
    table: Table,
    ledger: LabelLedger,
    backend,
    examples_per_round: int,
    rng: random.Random,
    meta: str | None = None,
    schema: tuple[SchemaColumn, ...] | None = None,
) -> list[tuple[int, float]]:
    """One context-free session: label N fresh rows, prompt the backend,
    label the row nearest its synthetic answer.  Spends exactly N+1 labels
    on success; on backend failure the N sampled labels stay spent."""
    n = examples_per_round
    pool = [r for r in table.rows if not r.labeled]
    if len(pool) < n + 1:
        raise ValueError(f"pool has {len(pool)} unlabeled rows; round needs {n + 1}")
    if ledger.remaining < n + 1:
        raise ValueError(f"ledger affords {ledger.remaining} labels; round needs {n + 1}")

    sampled = rng.sample(pool, n)
    results = []
    for row in sampled:
        ledger.label(row)
        results.append((row.id, score_row(table, row)))

    goals = table.goal_columns
    best, rest = best_rest_split(sampled, 0.5, ideal_point(goals), goals)
    bundle = build_bundle(table, best, rest, meta=meta)
    system, human, task = render_prompt(bundle)
    request = SynthesisRequest(
        system=system,
        human=human,
        task=task,
        schema=schema if schema is not None else build_schema(table),
    )

    last: SynthesisError | None = None
    synthetic = None
    for _ in range(PARSE_RETRIES + 1):
        try:
            synthetic = backend.synthesize(request, rng)
            break
        except SynthesisError as exc:
            last = exc
    if synthetic is None:
        raise last  # round aborts; sampled labels remain counted

    pool = [r for r in table.rows if not r.labeled]
    chosen = nearest_row(pool, synthetic, table.x_columns)
    row = next(r for r in pool if r.id == chosen)
    ledger.label(row)
    results.append((row.id, score_row(table, row)))
    return results


def run_synthcore(table: Table, backend, config: SynthConfig) -> RunResult:
    """Warm-start with random labels, run the independent rounds, return
    the best labeled row overall."""
    if config.budget > len(table.rows):
        raise ValueError(
            f"budget {config.budget} exceeds pool size {len(table.rows)}"
        )
    if any(r.labeled for r in table.rows):
        raise ValueError("run_synthcore needs a fresh table copy; some rows are already labeled")
    start = time.perf_counter()
    ledger = LabelLedger(config.budget)
    labeled_seq: list[tuple[int, float]] = []

    warm_rng = random.Random(f"{config.seed}:warm")
    pool = [r for r in table.rows if not r.labeled]
    for row in warm_rng.sample(pool, config.warm_labels):
        ledger.label(row)
        labeled_seq.append((row.id, score_row(table, row)))

    # Frozen after the warm start so every round sees identical metadata.
    meta = build_meta(table)
    schema = build_schema(table)

    for i in range(config.rounds):
        round_rng = random.Random(f"{config.seed}:round:{i}")
        try:
            labeled_seq.extend(
                synthesize_round(
                    table,
                    ledger,
                    backend,
                    config.examples_per_round,
                    round_rng,
                    meta=meta,
                    schema=schema,
                )
            )
        except SynthesisError as exc:
            logger.warning("round %d aborted: %s", i, exc)

    trace = [(step, row_id, score) for step, (row_id, score) in enumerate(labeled_seq, start=1)]
    _, best_id, best_score = min(trace, key=lambda t: (t[2], t[1]))
    return RunResult(
        best_row_id=best_id,
        best_score=best_score,
        labels_spent=ledger.spent,
        trace=trace,
        wall_time=time.perf_counter() - start,
    )
