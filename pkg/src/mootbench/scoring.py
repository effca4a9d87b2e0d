"""Distance-to-heaven scoring.

Each goal is min-max normalized to [0, 1]; the ideal point sits at 1 for
maximize goals and 0 for minimize goals.  A labeled row's score is the
Chebyshev distance to that ideal: the worst normalized shortfall across its
goals.  0 is perfect, 1 means worst-possible on at least one goal.
"""

from __future__ import annotations

import math

from .data import MAXIMIZE, ColumnSpec, Row, Table


def ideal_point(goal_cols: tuple[ColumnSpec, ...] | list[ColumnSpec]) -> tuple[float, ...]:
    """Normalized target per goal: 1 for maximize, 0 for minimize."""
    return tuple(1.0 if c.direction == MAXIMIZE else 0.0 for c in goal_cols)


def normalize_goal(value: float, col: ColumnSpec) -> float:
    """Map a raw goal value onto [0, 1] via the column's observed range.

    A constant column (lo == hi) normalizes to 0: it carries no signal and
    this avoids dividing by zero.
    """
    if col.lo is None or col.hi is None or col.lo > col.hi:
        raise ValueError(f"column {col.name!r} has no usable lo/hi range")
    if value < col.lo or value > col.hi:
        raise ValueError(
            f"value {value} outside [{col.lo}, {col.hi}] for column {col.name!r}; "
            "the ColumnSpec is stale"
        )
    if col.lo == col.hi:
        return 0.0
    return (value - col.lo) / (col.hi - col.lo)


def chebyshev(row: Row, ideal: tuple[float, ...], goal_cols) -> float:
    """Worst normalized distance between the row's goals and the ideal."""
    ys = row.y  # raises if the row is unlabeled
    return max(
        abs(normalize_goal(y, col) - target)
        for y, target, col in zip(ys, ideal, goal_cols)
    )


def score_row(table: Table, row: Row) -> float:
    """Chebyshev score of a labeled row against the table's ideal point."""
    goals = table.goal_columns
    return chebyshev(row, ideal_point(goals), goals)


def pool_scores(table: Table) -> list[float]:
    """Scores of every row, labeled or not.

    Oracle view for analysis and reporting (baselines, optimal curves);
    acquisition code must never call this.
    """
    goals = table.goal_columns
    ideal = ideal_point(goals)
    out = []
    for row in table.rows:
        out.append(
            max(
                abs(normalize_goal(y, col) - t)
                for y, t, col in zip(row.oracle_y(), ideal, goals)
            )
        )
    return out


def best_rest_split(
    rows: list[Row],
    fraction: float,
    ideal: tuple[float, ...],
    goal_cols,
) -> tuple[list[Row], list[Row]]:
    """Split labeled rows into the best ceil(fraction * n) and the rest.

    Rows sort ascending by Chebyshev score with ties broken by row id, so
    the same inputs always split the same way.
    """
    if len(rows) < 2:
        raise ValueError("best/rest split needs at least 2 labeled rows")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    ranked = sorted(rows, key=lambda r: (chebyshev(r, ideal, goal_cols), r.id))
    cut = math.ceil(fraction * len(ranked))
    return ranked[:cut], ranked[cut:]
