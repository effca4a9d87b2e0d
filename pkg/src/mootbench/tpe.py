"""Tree-structured Parzen Estimator acquisition.

Labeled rows split at a score quantile gamma into a low (good) and a high
(bad) class; each class gets a Parzen density over encoded x space, and
acquisition picks the pool row minimizing the bad/good density ratio.

Densities multiply per-dimension estimates: Gaussian kernels with a
Scott-rule bandwidth (floored at 1e-3 of the unit-scaled range) on numeric
dims, Laplace-smoothed level frequencies on one-hot blocks.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .data import NUMERIC, ColumnSpec, Row, Table
from .scoring import chebyshev, ideal_point, score_row
from .gpm import encode_pool, encoding_layout

DEFAULT_GAMMA = 0.25
BANDWIDTH_FLOOR = 1e-3
DENSITY_FLOOR = 1e-300
_LOG_FLOOR = math.log(DENSITY_FLOOR)


def split_by_quantile(
    labeled: list[Row], gamma: float, ideal: tuple[float, ...], goal_cols
) -> tuple[list[Row], list[Row]]:
    """Sort labeled rows ascending by score (ties by id); the first
    ceil(gamma * n) feed the good density, the rest the bad one."""
    if len(labeled) < 2:
        raise ValueError("quantile split needs at least 2 labeled rows")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    ranked = sorted(labeled, key=lambda r: (chebyshev(r, ideal, goal_cols), r.id))
    cut = math.ceil(gamma * len(ranked))
    if cut >= len(ranked):
        raise ValueError(
            f"gamma {gamma} leaves no rows above the quantile for n={len(ranked)}"
        )
    return ranked[:cut], ranked[cut:]


class ParzenDensity:
    """Per-dimension Parzen estimate over a set of encoded support points."""

    def __init__(self, points: np.ndarray, layout: list[tuple[str, int]]):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] < 1:
            raise ValueError("density needs at least one support point")
        self.points = points
        self.layout = layout
        self.n = points.shape[0]
        scott = self.n ** (-1.0 / 5.0)
        self.bandwidths: list[float] = []
        self.level_counts: list[np.ndarray] = []
        offset = 0
        for kind, width in layout:
            if kind == NUMERIC:
                sd = float(np.std(points[:, offset]))
                self.bandwidths.append(max(scott * sd, BANDWIDTH_FLOOR))
            else:
                self.level_counts.append(points[:, offset : offset + width].sum(axis=0))
            offset += width

    def log_density_many(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        total = np.zeros(queries.shape[0])
        offset = 0
        num_i = 0
        cat_i = 0
        for kind, width in self.layout:
            if kind == NUMERIC:
                h = self.bandwidths[num_i]
                num_i += 1
                diff = queries[:, offset, None] - self.points[None, :, offset]
                mix = np.exp(-(diff**2) / (2.0 * h * h)).mean(axis=1) / (
                    h * math.sqrt(2.0 * math.pi)
                )
                with np.errstate(divide="ignore"):
                    total += np.log(mix)
            else:
                counts = self.level_counts[cat_i]
                cat_i += 1
                block = queries[:, offset : offset + width]
                # Laplace smoothing over the block's observed levels; an
                # all-zero (unseen) block gets the pseudocount alone.
                hits = block @ counts
                total += np.log((hits + 1.0) / (self.n + width))
            offset += width
        return np.maximum(total, _LOG_FLOOR)

    def density(self, query: np.ndarray) -> float:
        return float(np.exp(self.log_density_many(np.asarray(query)[None, :])[0]))


def kde_density(points, query, layout: list[tuple[str, int]]) -> float:
    """Parzen density of one encoded query given encoded support points."""
    return ParzenDensity(np.asarray(points, dtype=float), layout).density(
        np.asarray(query, dtype=float)
    )


@dataclass
class ParzenPair:
    """Good/bad densities split at the score quantile."""

    gamma: float
    y_star: float
    low: ParzenDensity   # fitted to scores below the threshold
    high: ParzenDensity  # fitted to scores at or above it


def fit_parzen_pair(table: Table, labeled: list[Row], gamma: float = DEFAULT_GAMMA) -> ParzenPair:
    goals = table.goal_columns
    ideal = ideal_point(goals)
    low_rows, high_rows = split_by_quantile(labeled, gamma, ideal, goals)
    layout = encoding_layout(table.x_columns)
    return ParzenPair(
        gamma=gamma,
        y_star=score_row(table, high_rows[0]),
        low=ParzenDensity(encode_pool(low_rows, table.x_columns), layout),
        high=ParzenDensity(encode_pool(high_rows, table.x_columns), layout),
    )


def acquire_tpe(pair: ParzenPair, pool: list[Row], columns: tuple[ColumnSpec, ...]) -> int:
    """Pool row minimizing high/low density ratio; ties break by row id.

    Ranks by the log ratio, which orders identically and cannot overflow.
    """
    if not pool:
        raise ValueError("empty pool")
    Xq = encode_pool(pool, columns)
    ratio = pair.high.log_density_many(Xq) - pair.low.log_density_many(Xq)
    ids = np.array([r.id for r in pool])
    order = np.lexsort((ids, ratio))
    return int(ids[order[0]])


class TpePolicy:
    """run_loop policy: refit the Parzen pair each step."""

    name = "tpe"

    def __init__(self, gamma: float = DEFAULT_GAMMA):
        self.gamma = gamma

    def choose(self, table: Table, labeled: list[Row], pool: list[Row], rng: random.Random) -> int:
        pair = fit_parzen_pair(table, labeled, gamma=self.gamma)
        return acquire_tpe(pair, pool, table.x_columns)
