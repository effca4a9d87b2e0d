"""Gaussian-process surrogate with confidence-bound acquisition.

Rows are encoded into [0,1]-scaled numeric dims plus one-hot blocks for
symbolic columns.  A squared-exponential GP is fit to the encoded labeled
rows against their distance-to-heaven scores; acquisition picks the pool
row minimizing mu - kappa * sigma (the minimization mirror of the usual
upper confidence bound, since the score is a cost).

The GP is deliberately plain: fixed lengthscale sqrt(d)/2 on unit-scaled
inputs, signal variance var(y), and a jitter that doubles from 1e-6 until
the Cholesky factorization succeeds (1e-2 at most).  Budgets of a few
dozen labels make marginal-likelihood refits noisy and slow, so there is
no hyperparameter re-optimization during a run.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .data import NUMERIC, SYMBOLIC, ColumnSpec, Row, Table
from .scoring import score_row

JITTER_START = 1e-6
JITTER_MAX = 1e-2
DEFAULT_KAPPA = 2.0


class FitError(RuntimeError):
    """Cholesky factorization failed even at the maximum jitter."""


def encoded_dim(columns: tuple[ColumnSpec, ...]) -> int:
    return sum(1 if c.kind == NUMERIC else len(c.levels or ()) for c in columns)


def encoding_layout(columns: tuple[ColumnSpec, ...]) -> list[tuple[str, int]]:
    """(kind, width) per independent column, in encoding order."""
    out = []
    for col in columns:
        if col.kind == NUMERIC:
            out.append((NUMERIC, 1))
        else:
            out.append((SYMBOLIC, len(col.levels or ())))
    return out


def encode_x(row: Row, columns: tuple[ColumnSpec, ...]) -> np.ndarray:
    """Encode public x cells: numeric min-max scaled to [0,1], symbolic
    one-hot over the column's observed levels (unseen symbol -> all-zero
    block).  Encoding order follows column order."""
    parts: list[float] = []
    for pos, col in enumerate(columns):
        v = row.x[pos]
        if col.kind == NUMERIC:
            span = col.hi - col.lo
            parts.append(0.0 if span == 0 else (v - col.lo) / span)
        else:
            block = [0.0] * len(col.levels or ())
            levels = col.levels or ()
            if v in levels:
                block[levels.index(v)] = 1.0
            parts.extend(block)
    return np.asarray(parts, dtype=float)


def encode_pool(rows: list[Row], columns: tuple[ColumnSpec, ...]) -> np.ndarray:
    return np.vstack([encode_x(r, columns) for r in rows])


@dataclass
class GPModel:
    """Immutable fitted GP: refitting produces a new model."""

    X: np.ndarray
    y_mean: float
    alpha: np.ndarray  # chol_solve(K, y - y_mean)
    chol: np.ndarray
    lengthscale: float
    signal_var: float
    jitter: float
    kappa: float


def _kernel(A: np.ndarray, B: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return signal_var * np.exp(-sq / (2.0 * lengthscale**2))


def fit(X: np.ndarray, y: np.ndarray, kappa: float = DEFAULT_KAPPA) -> GPModel:
    """Fit the squared-exponential GP, escalating jitter on Cholesky failure."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) < 2:
        raise ValueError("GP fit needs at least 2 labeled rows")
    d = X.shape[1]
    lengthscale = math.sqrt(d) / 2.0 if d else 0.5
    signal_var = max(float(np.var(y)), 1e-12)
    y_mean = float(np.mean(y))
    K = _kernel(X, X, lengthscale, signal_var)
    jitter = JITTER_START
    while True:
        try:
            chol = np.linalg.cholesky(K + jitter * np.eye(len(X)))
            break
        except np.linalg.LinAlgError:
            jitter *= 2.0
            if jitter > JITTER_MAX:
                raise FitError(
                    f"Cholesky failed for {len(X)} points even at jitter {JITTER_MAX}"
                ) from None
    resid = y - y_mean
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, resid))
    return GPModel(
        X=X,
        y_mean=y_mean,
        alpha=alpha,
        chol=chol,
        lengthscale=lengthscale,
        signal_var=signal_var,
        jitter=jitter,
        kappa=kappa,
    )


def fit_rows(table: Table, labeled: list[Row], kappa: float = DEFAULT_KAPPA) -> GPModel:
    X = encode_pool(labeled, table.x_columns)
    y = np.array([score_row(table, r) for r in labeled])
    return fit(X, y, kappa=kappa)


def posterior_many(model: GPModel, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and sd at a batch of encoded query points."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = _kernel(model.X, Xq, model.lengthscale, model.signal_var)
    mu = model.y_mean + Ks.T @ model.alpha
    v = np.linalg.solve(model.chol, Ks)
    var = model.signal_var - np.sum(v * v, axis=0)
    np.maximum(var, 0.0, out=var)
    return mu, np.sqrt(var)


def posterior(model: GPModel, x: np.ndarray) -> tuple[float, float]:
    """Posterior (mu, sigma) at one encoded point."""
    mu, sd = posterior_many(model, np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(sd[0])


def acquire_ucb(model: GPModel, pool: list[Row], columns: tuple[ColumnSpec, ...]) -> int:
    """Pool row minimizing mu - kappa * sigma; ties break by row id."""
    if not pool:
        raise ValueError("empty pool")
    Xq = encode_pool(pool, columns)
    mu, sd = posterior_many(model, Xq)
    score = mu - model.kappa * sd
    ids = np.array([r.id for r in pool])
    order = np.lexsort((ids, score))
    return int(ids[order[0]])


class UcbPolicy:
    """run_loop policy: refit the GP each step, acquire by confidence bound."""

    name = "ucb_gpm"

    def __init__(self, kappa: float = DEFAULT_KAPPA):
        self.kappa = kappa

    def choose(self, table: Table, labeled: list[Row], pool: list[Row], rng: random.Random) -> int:
        model = fit_rows(table, labeled, kappa=self.kappa)
        return acquire_ucb(model, pool, table.x_columns)
