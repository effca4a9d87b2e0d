"""Budgeted pool-based active learning.

One run labels `warm` random rows, then repeatedly asks an acquisition
policy for the next unlabeled row until the budget is spent, and returns
the labeled row with the lowest distance-to-heaven.  The exploit and
explore policies rank candidates with a two-class (best vs rest) Naive
Bayes model over the public x cells.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Protocol

from .data import NUMERIC, ColumnSpec, Row, Table
from .scoring import best_rest_split, ideal_point, score_row

# exp() saturates around +-745; clamping keeps likelihoods positive/finite
_LOG_CLAMP = 700.0


class BudgetExhaustedError(RuntimeError):
    """Raised when a label is requested after the budget is spent."""


@dataclass
class LabelLedger:
    """Counts labels against a budget.  Re-labeling a row spends nothing."""

    budget: int
    spent: int = 0
    labeled_ids: list[int] = field(default_factory=list)

    def label(self, row: Row) -> bool:
        """Reveal a row's goals.  Returns True if a label was spent."""
        if row.labeled:
            return False
        if self.spent >= self.budget:
            raise BudgetExhaustedError(f"budget {self.budget} already spent")
        row.labeled = True
        self.spent += 1
        self.labeled_ids.append(row.id)
        return True

    @property
    def remaining(self) -> int:
        return self.budget - self.spent


@dataclass
class RunResult:
    """Outcome of one budgeted run.  best_row_id is None only for the
    label-free baseline pseudo-treatment."""

    best_row_id: int | None
    best_score: float
    labels_spent: int
    trace: list[tuple[int, int, float]]  # (step, row id, score)
    wall_time: float


class AcquisitionPolicy(Protocol):
    name: str

    def choose(self, table: Table, labeled: list[Row], pool: list[Row], rng: random.Random) -> int:
        """Return the id of the next row to label."""
        ...


def acquire_random(pool: list[Row], rng: random.Random) -> int:
    """Uniform choice over the unlabeled pool."""
    if not pool:
        raise ValueError("empty pool")
    return rng.choice(pool).id


def _class_stats(rows: list[Row], x_cols: tuple[ColumnSpec, ...]):
    """Per-attribute Gaussian (mean, floored sd) or level counts."""
    stats = []
    for pos, col in enumerate(x_cols):
        values = [r.x[pos] for r in rows]
        if col.kind == NUMERIC:
            mean = statistics.fmean(values)
            sd = statistics.pstdev(values) if len(values) > 1 else 0.0
            span = (col.hi - col.lo) if col.hi is not None and col.lo is not None else 0.0
            sd = max(sd, 1e-6 * span, 1e-12)
            stats.append((mean, sd))
        else:
            counts: dict[str, int] = {}
            for v in values:
                counts[v] = counts.get(v, 0) + 1
            stats.append((counts, len(values), len(col.levels or ())))
    return stats


def _log_likelihood(row: Row, stats, x_cols: tuple[ColumnSpec, ...]) -> float:
    total = 0.0
    for pos, col in enumerate(x_cols):
        v = row.x[pos]
        if col.kind == NUMERIC:
            mean, sd = stats[pos]
            total += -math.log(sd * math.sqrt(2.0 * math.pi)) - ((v - mean) ** 2) / (2.0 * sd * sd)
        else:
            counts, n, n_levels = stats[pos]
            total += math.log((counts.get(v, 0) + 1.0) / (n + max(n_levels, 1)))
    return total


def _log_class_likelihoods(
    row: Row, best: list[Row], rest: list[Row], x_cols: tuple[ColumnSpec, ...]
) -> tuple[float, float]:
    if not best or not rest:
        raise ValueError("both classes need at least one row")
    total = len(best) + len(rest)
    lb = math.log(len(best) / total) + _log_likelihood(row, _class_stats(best, x_cols), x_cols)
    lr = math.log(len(rest) / total) + _log_likelihood(row, _class_stats(rest, x_cols), x_cols)
    return lb, lr


def likelihoods(
    row: Row, best: list[Row], rest: list[Row], x_cols: tuple[ColumnSpec, ...]
) -> tuple[float, float]:
    """Two-class Naive Bayes likelihoods (best, rest) of a row's x cells.

    Numeric attributes use a per-class Gaussian with a floored sd, symbolic
    attributes a Laplace-smoothed frequency; each class likelihood is the
    exp of its summed log terms plus the log class prior (clamped so the
    result stays a positive float).
    """
    lb, lr = _log_class_likelihoods(row, best, rest, x_cols)
    lb = max(-_LOG_CLAMP, min(_LOG_CLAMP, lb))
    lr = max(-_LOG_CLAMP, min(_LOG_CLAMP, lr))
    return math.exp(lb), math.exp(lr)


def acquire_exploit(
    pool: list[Row], best: list[Row], rest: list[Row], x_cols: tuple[ColumnSpec, ...]
) -> int:
    """Row maximizing the best/rest likelihood ratio; ties break by id."""
    if not pool:
        raise ValueError("empty pool")
    scored = []
    for row in pool:
        lb, lr = _log_class_likelihoods(row, best, rest, x_cols)
        scored.append((-(lb - lr), row.id))
    return min(scored)[1]


def acquire_explore(
    pool: list[Row], best: list[Row], rest: list[Row], x_cols: tuple[ColumnSpec, ...]
) -> int:
    """Row with the most uncertain class call (minimal |b - r|); ties by id."""
    if not pool:
        raise ValueError("empty pool")
    scored = []
    for row in pool:
        b, r = likelihoods(row, best, rest, x_cols)
        scored.append((abs(b - r), row.id))
    return min(scored)[1]


class RandomPolicy:
    name = "random"

    def choose(self, table, labeled, pool, rng):
        return acquire_random(pool, rng)


class _BayesPolicy:
    """Shared refit-per-step machinery for exploit/explore."""

    split_fraction = 0.5

    def _classes(self, table: Table, labeled: list[Row]):
        goals = table.goal_columns
        return best_rest_split(labeled, self.split_fraction, ideal_point(goals), goals)


class ExploitPolicy(_BayesPolicy):
    name = "exploit"

    def choose(self, table, labeled, pool, rng):
        best, rest = self._classes(table, labeled)
        return acquire_exploit(pool, best, rest, table.x_columns)


class ExplorePolicy(_BayesPolicy):
    name = "explore"

    def choose(self, table, labeled, pool, rng):
        best, rest = self._classes(table, labeled)
        return acquire_explore(pool, best, rest, table.x_columns)


def run_loop(
    table: Table, policy: AcquisitionPolicy, budget: int, warm: int = 4, seed: int = 0
) -> RunResult:
    """Warm-start with random labels, then acquire via `policy` until the
    budget is exhausted; return the labeled row minimizing the score."""
    if warm < 2:
        raise ValueError("warm start needs at least 2 labels")
    if budget < warm:
        raise ValueError(f"budget {budget} smaller than warm start {warm}")
    if budget > len(table.rows):
        raise ValueError(
            f"budget {budget} exceeds pool size {len(table.rows)}; pool would be exhausted"
        )
    if any(r.labeled for r in table.rows):
        raise ValueError("run_loop needs a fresh table copy; some rows are already labeled")
    start = time.perf_counter()
    rng = random.Random(seed)
    ledger = LabelLedger(budget)
    by_id = {r.id: r for r in table.rows}
    trace: list[tuple[int, int, float]] = []

    def label(row_id: int):
        row = by_id[row_id]
        if ledger.label(row):
            trace.append((ledger.spent, row.id, score_row(table, row)))

    pool = [r for r in table.rows if not r.labeled]
    while ledger.spent < warm and pool:
        label(acquire_random(pool, rng))
        pool = [r for r in table.rows if not r.labeled]
    while ledger.spent < budget:
        labeled = [r for r in table.rows if r.labeled]
        pool = [r for r in table.rows if not r.labeled]
        label(policy.choose(table, labeled, pool, rng))

    step, row_id, score = min(trace, key=lambda t: (t[2], t[1]))
    return RunResult(
        best_row_id=row_id,
        best_score=score,
        labels_spent=ledger.spent,
        trace=trace,
        wall_time=time.perf_counter() - start,
    )
