"""Statistical ranking of treatments.

Treatments are recursively partitioned into rank groups: sort by mean,
find the split maximizing the between-group sum of squares
n1*(m1 - m)^2 + n2*(m2 - m)^2, and keep splitting only while a bootstrap
significance test and a Cliff's-delta effect-size test both say the two
halves' pooled samples differ by more than a small effect.  Per-dataset
rank groups aggregate into treatment x rank percentage tables.

Also houses the near-enough sample-size bound: the number of uniform
draws needed to hit an epsilon-near-optimal row with confidence C,
ceil(log(1-C) / log(1-epsilon)).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from statistics import fmean

import numpy as np

DELTA_SMALL = 0.147
DEFAULT_RESAMPLES = 512
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class TreatmentSamples:
    """One treatment's scores across repeats."""

    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValueError(f"treatment {self.name!r} needs >= 2 samples")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"treatment {self.name!r} has non-finite samples")


@dataclass(frozen=True)
class RankGroup:
    rank: int
    members: tuple[str, ...]
    mean: float


def cliffs_delta(a, b) -> float:
    """(#{a_i > b_j} - #{a_i < b_j}) / (|a| * |b|), in [-1, 1].

    Counted via a sorted copy of b and binary search, so it stays cheap
    for larger samples.
    """
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    sorted_b = sorted(b)
    greater = 0
    less = 0
    for x in a:
        greater += bisect.bisect_left(sorted_b, x)
        less += len(sorted_b) - bisect.bisect_right(sorted_b, x)
    return (greater - less) / (len(a) * len(b))


def bootstrap_distinct(a, b, resamples: int = DEFAULT_RESAMPLES, alpha: float = DEFAULT_ALPHA, rng=None) -> bool:
    """Are two samples distinguishable under a pooled-resampling null?

    True iff the observed |mean(a) - mean(b)| exceeds the (1 - alpha)
    quantile of the same statistic over `resamples` pool-and-resplit
    resamples.
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError("bootstrap needs >= 2 samples per side")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    observed = abs(a.mean() - b.mean())
    pool = np.concatenate([a, b])
    idx = rng.integers(0, len(pool), size=(resamples, len(pool)))
    sampled = pool[idx]
    stat = np.abs(sampled[:, : len(a)].mean(axis=1) - sampled[:, len(a):].mean(axis=1))
    return bool(observed > np.quantile(stat, 1.0 - alpha))


def _best_split(treatments: list[TreatmentSamples]) -> int:
    """Index maximizing the between-group sum of squares over pooled values."""
    all_values = [v for t in treatments for v in t.values]
    grand = fmean(all_values)
    best_i = 1
    best_ss = -math.inf
    for i in range(1, len(treatments)):
        left = [v for t in treatments[:i] for v in t.values]
        right = [v for t in treatments[i:] for v in t.values]
        ss = len(left) * (fmean(left) - grand) ** 2 + len(right) * (fmean(right) - grand) ** 2
        if ss > best_ss:
            best_ss = ss
            best_i = i
    return best_i


def scott_knott(
    treatments: list[TreatmentSamples],
    delta_small: float = DELTA_SMALL,
    resamples: int = DEFAULT_RESAMPLES,
    alpha: float = DEFAULT_ALPHA,
    rng=None,
) -> list[RankGroup]:
    """Partition treatments into contiguous rank groups, rank 0 best
    (lowest mean).  Deterministic for a fixed rng."""
    if not treatments:
        raise ValueError("need at least one treatment")
    rng = rng if rng is not None else np.random.default_rng(0)
    ordered = sorted(treatments, key=lambda t: (fmean(t.values), t.name))
    leaves: list[list[TreatmentSamples]] = []

    def recurse(block: list[TreatmentSamples]):
        if len(block) == 1:
            leaves.append(block)
            return
        i = _best_split(block)
        left = [v for t in block[:i] for v in t.values]
        right = [v for t in block[i:] for v in t.values]
        distinct = bootstrap_distinct(left, right, resamples, alpha, rng) and (
            abs(cliffs_delta(left, right)) > delta_small
        )
        if distinct:
            recurse(block[:i])
            recurse(block[i:])
        else:
            leaves.append(block)

    recurse(ordered)
    groups = []
    for rank, block in enumerate(leaves):
        values = [v for t in block for v in t.values]
        groups.append(
            RankGroup(rank=rank, members=tuple(t.name for t in block), mean=fmean(values))
        )
    return groups


@dataclass(frozen=True)
class RankTable:
    """Treatment x rank percentage matrix over a set of datasets."""

    ranks: tuple[int, ...]
    rows: tuple[tuple[str, tuple[int, ...]], ...]

    def to_csv(self) -> str:
        lines = ["treatment," + ",".join(f"rank{r}" for r in self.ranks)]
        for name, cells in self.rows:
            lines.append(name + "," + ",".join(str(c) for c in cells))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        header = ["treatment"] + [str(r) for r in self.ranks]
        lines = [
            "| " + " | ".join(header) + " |",
            "|" + "|".join(" --- " for _ in header) + "|",
        ]
        for name, cells in self.rows:
            lines.append("| " + name + " | " + " | ".join(str(c) if c else "" for c in cells) + " |")
        return "\n".join(lines) + "\n"


def rank_table(per_dataset: dict[str, list[RankGroup]]) -> RankTable:
    """Aggregate per-dataset rank groups: cell (treatment, rank) is the
    percentage of datasets placing the treatment at that rank, rounded to
    the nearest integer.  Rows sort by descending rank-0 share."""
    if not per_dataset:
        raise ValueError("no datasets to aggregate")
    names = sorted(per_dataset)
    treatment_sets = {
        ds: frozenset(m for g in groups for m in g.members) for ds, groups in per_dataset.items()
    }
    reference = treatment_sets[names[0]]
    for ds, present in treatment_sets.items():
        if present != reference:
            raise ValueError(
                f"dataset {ds!r} ranks treatments {sorted(present)}, "
                f"expected {sorted(reference)}"
            )
    max_rank = max(g.rank for groups in per_dataset.values() for g in groups)
    ranks = tuple(range(max_rank + 1))
    counts: dict[str, list[int]] = {t: [0] * (max_rank + 1) for t in reference}
    for groups in per_dataset.values():
        for group in groups:
            for member in group.members:
                counts[member][group.rank] += 1
    n = len(per_dataset)
    rows = []
    for treatment in sorted(reference):
        cells = tuple(round(100.0 * c / n) for c in counts[treatment])
        rows.append((treatment, cells))
    rows.sort(key=lambda row: (tuple(-c for c in row[1]), row[0]))
    return RankTable(ranks=ranks, rows=tuple(rows))


def neo_samples(confidence: float, epsilon: float) -> int:
    """Minimal n with 1 - (1 - epsilon)^n >= confidence, floored at 1."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    n = math.ceil(math.log(1.0 - confidence) / math.log(1.0 - epsilon))
    return max(n, 1)
