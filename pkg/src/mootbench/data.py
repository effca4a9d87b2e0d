"""MOOT-format tabular datasets.

A MOOT file is plain CSV whose header encodes column semantics:
names ending in ``+`` / ``-`` are goals to maximize / minimize, all other
columns are independent inputs; names starting with an uppercase letter hold
numbers, the rest hold symbols.  Goal cells are hidden until a row is
labeled.
"""

from __future__ import annotations

import csv
import io
import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, TextIO

NUMERIC = "numeric"
SYMBOLIC = "symbolic"
INDEPENDENT = "independent"
GOAL = "goal"
MAXIMIZE = "maximize"
MINIMIZE = "minimize"
NONE = "none"

_MISSING = ("", "?")


class DataFormatError(ValueError):
    """Raised when a header or body violates the MOOT format."""


class UnlabeledRowError(RuntimeError):
    """Raised when goal cells are read before the row was labeled."""


@dataclass(frozen=True)
class ColumnSpec:
    """One column: its name (sigil stripped), type, role and value range.

    ``lo``/``hi`` are filled for numeric columns once data is loaded;
    ``levels`` holds the sorted distinct values of a symbolic column.
    """

    name: str
    kind: str
    role: str
    direction: str
    lo: float | None = None
    hi: float | None = None
    levels: tuple[str, ...] | None = None

    @property
    def is_goal(self) -> bool:
        return self.role == GOAL

    def header_name(self) -> str:
        """Original header spelling, goal sigil reattached."""
        if self.direction == MAXIMIZE:
            return self.name + "+"
        if self.direction == MINIMIZE:
            return self.name + "-"
        return self.name


class Row:
    """A single example: public x cells, goal cells hidden until labeled."""

    __slots__ = ("id", "x", "labeled", "_y")

    def __init__(self, id: int, x: tuple, y: tuple[float, ...], labeled: bool = False):
        self.id = id
        self.x = tuple(x)
        self._y = tuple(y)
        self.labeled = labeled

    @property
    def y(self) -> tuple[float, ...]:
        if not self.labeled:
            raise UnlabeledRowError(f"row {self.id} is unlabeled; goal values are hidden")
        return self._y

    def oracle_y(self) -> tuple[float, ...]:
        """Goal cells without the labeling check.  Analysis and reporting
        only; never for acquisition decisions."""
        return self._y

    def copy(self, id: int | None = None) -> "Row":
        return Row(self.id if id is None else id, self.x, self._y, self.labeled)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Row):
            return NotImplemented
        return (self.id, self.x, self._y, self.labeled) == (
            other.id,
            other.x,
            other._y,
            other.labeled,
        )

    def __repr__(self) -> str:
        return f"Row(id={self.id}, x={self.x!r}, labeled={self.labeled})"


@dataclass
class Table:
    """An immutable-after-load MOOT dataset."""

    name: str
    columns: tuple[ColumnSpec, ...]
    rows: list[Row]

    @property
    def x_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == INDEPENDENT)

    @property
    def goal_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == GOAL)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        return (self.name, self.columns, self.rows) == (other.name, other.columns, other.rows)


def parse_header(names: list[str]) -> list[ColumnSpec]:
    """Classify header names into column specs.

    Trailing ``+``/``-`` marks a goal (maximize/minimize), anything else is
    independent; a leading uppercase letter marks a numeric column.  The
    sigil is stripped from the stored name.
    """
    if not names:
        raise DataFormatError("empty header")
    specs: list[ColumnSpec] = []
    seen: set[str] = set()
    for raw in names:
        raw = raw.strip()
        if not raw:
            raise DataFormatError("empty column name")
        if raw.endswith("+"):
            role, direction = GOAL, MAXIMIZE
            name = raw[:-1]
        elif raw.endswith("-"):
            role, direction = GOAL, MINIMIZE
            name = raw[:-1]
        else:
            role, direction = INDEPENDENT, NONE
            name = raw
        if not name:
            raise DataFormatError(f"column {raw!r} has no name besides its goal sigil")
        kind = NUMERIC if name[0].isupper() else SYMBOLIC
        if role == GOAL and kind == SYMBOLIC:
            raise DataFormatError(
                f"goal column {raw!r} is symbolic; goals must be numeric"
            )
        if name in seen:
            raise DataFormatError(f"duplicate column name {name!r} after sigil stripping")
        seen.add(name)
        specs.append(ColumnSpec(name=name, kind=kind, role=role, direction=direction))
    if not any(s.role == GOAL for s in specs):
        raise DataFormatError("no goal columns (no header name ends in + or -)")
    if not any(s.role == INDEPENDENT for s in specs):
        raise DataFormatError("no independent columns")
    return specs


def _parse_cell(cell: str, spec: ColumnSpec, line: int):
    cell = cell.strip()
    if cell in _MISSING:
        raise DataFormatError(f"line {line}: missing cell in column {spec.name!r}")
    if spec.kind == NUMERIC:
        try:
            value = float(cell)
        except ValueError:
            raise DataFormatError(
                f"line {line}: non-numeric cell {cell!r} in numeric column {spec.name!r}"
            ) from None
        if not math.isfinite(value):
            raise DataFormatError(
                f"line {line}: non-finite cell {cell!r} in column {spec.name!r}"
            )
        return value
    return cell


def load_table(source: str | bytes | TextIO, name: str) -> Table:
    """Load a MOOT CSV: header on the first line, one example per row."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty file") from None
    specs = parse_header(header)
    width = len(specs)
    x_idx = [i for i, s in enumerate(specs) if s.role == INDEPENDENT]
    y_idx = [i for i, s in enumerate(specs) if s.role == GOAL]

    rows: list[Row] = []
    for line_no, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != width:
            raise DataFormatError(
                f"line {line_no}: expected {width} cells, found {len(record)}"
            )
        cells = [_parse_cell(c, specs[i], line_no) for i, c in enumerate(record)]
        rows.append(
            Row(
                id=len(rows),
                x=tuple(cells[i] for i in x_idx),
                y=tuple(cells[i] for i in y_idx),
            )
        )
    if not rows:
        raise DataFormatError("empty body: file has a header but no data rows")
    return Table(name=name, columns=tuple(_finalize_specs(specs, rows)), rows=rows)


def _finalize_specs(specs: list[ColumnSpec], rows: list[Row]) -> Iterable[ColumnSpec]:
    """Fill lo/hi for numeric columns and levels for symbolic ones."""
    x_pos = 0
    y_pos = 0
    for spec in specs:
        if spec.role == INDEPENDENT:
            values = [r.x[x_pos] for r in rows]
            x_pos += 1
        else:
            values = [r._y[y_pos] for r in rows]
            y_pos += 1
        if spec.kind == NUMERIC:
            yield ColumnSpec(
                name=spec.name,
                kind=spec.kind,
                role=spec.role,
                direction=spec.direction,
                lo=min(values),
                hi=max(values),
            )
        else:
            yield ColumnSpec(
                name=spec.name,
                kind=spec.kind,
                role=spec.role,
                direction=spec.direction,
                levels=tuple(sorted(set(values))),
            )


def read_table(path) -> Table:
    """Load a MOOT CSV from disk, naming the table after the file stem."""
    import pathlib

    p = pathlib.Path(path)
    with open(p, newline="") as handle:
        return load_table(handle, name=p.stem)


def format_number(value: float) -> str:
    """Canonical cell spelling: integers without a trailing .0, everything
    else via repr so that parsing the text recovers the exact float."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def table_to_csv(table: Table) -> str:
    """Serialize back to MOOT CSV.  load_table(table_to_csv(t)) == t."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([c.header_name() for c in table.columns])
    for row in table.rows:
        cells: list[str] = []
        xi = 0
        yi = 0
        for col in table.columns:
            if col.role == INDEPENDENT:
                v = row.x[xi]
                xi += 1
                cells.append(format_number(v) if col.kind == NUMERIC else str(v))
            else:
                cells.append(format_number(row._y[yi]))
                yi += 1
        writer.writerow(cells)
    return out.getvalue()


def shuffle_rows(table: Table, seed: int) -> Table:
    """Deterministically permute rows; ids are re-indexed in the new order.

    Returns a fresh Table with copied rows so the source stays untouched
    and can be shared across concurrent runs.
    """
    order = list(range(len(table.rows)))
    random.Random(seed).shuffle(order)
    rows = [table.rows[j].copy(id=i) for i, j in enumerate(order)]
    return Table(name=table.name, columns=table.columns, rows=rows)


def symbol_modes(table: Table) -> dict[str, str]:
    """Most frequent level per symbolic independent column (ties break by
    the smaller value, for reproducibility)."""
    modes: dict[str, str] = {}
    for pos, col in enumerate(table.x_columns):
        if col.kind != SYMBOLIC:
            continue
        counts = Counter(r.x[pos] for r in table.rows)
        best = max(sorted(counts), key=lambda lvl: counts[lvl])
        modes[col.name] = best
    return modes
