"""Rendering of result rows as CSV and Markdown tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .exceptions import SimAlignError, ValidationError

TABLE_KINDS = ("table1", "table2", "table3")

COLUMNS = {
    "table1": [
        ("dataset", "Dataset"),
        ("raw_r2", "Raw R²"),
        ("transformed_r2", "Transformed R²"),
        ("cv_control_r2", "CV Control R²"),
        ("human_split_half_r2", "Human Split-Half R²"),
    ],
    "table2": [("training_set", "Training Set"), ("test_set", "Test Set"), ("r2", "R²")],
    "table3": [("leave_out", "Leave Out"), ("r2", "R²")],
}
OPTIONAL = {"human_split_half_r2"}


class IncompleteTableError(SimAlignError):
    """Raised in strict mode when a table has gaps."""

    def __init__(self, message, gaps=()):
        super().__init__(message)
        self.gaps = list(gaps)


@dataclass
class Table:
    kind: str
    header: list
    rows: list  # list of lists; None marks a gap
    gaps: list = field(default_factory=list)
    precision: int = 4

    def _cell(self, v):
        if v is None:
            return ""
        if isinstance(v, float):
            return "" if math.isnan(v) else f"{v:.{self.precision}f}"
        return str(v)

    def to_csv(self, comments: dict | None = None) -> str:
        buf = io.StringIO()
        for key, value in (comments or {}).items():
            buf.write(f"# {key}={value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([self._cell(v) for v in row])
        return buf.getvalue()

    def to_markdown(self, comments: dict | None = None) -> str:
        lines = ["| " + " | ".join(self.header) + " |",
                 "|" + "|".join("---" for _ in self.header) + "|"]
        for row in self.rows:
            lines.append("| " + " | ".join(self._cell(v) or "–" for v in row) + " |")
        if comments:
            lines.append("")
            lines.append("<!-- " + " ".join(f"{k}={v}" for k, v in comments.items()) + " -->")
        return "\n".join(lines) + "\n"


def _domains(rows, keys):
    seen = []
    for r in rows:
        for k in keys:
            if k in r and r[k] not in seen:
                seen.append(r[k])
    return seen


def _value(row, key):
    v = row.get(key)
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return v


def table_report(results, kind: str, strict: bool = False, precision: int = 4) -> Table:
    """Shape result rows as a per-domain fit (table1), transfer (table2) or leave-one-out (table3) table.

    ``results`` is a list of dicts keyed by the column keys in ``COLUMNS``.
    Missing cells become explicit gaps; with ``strict`` any gap, or an empty
    input, raises :class:`IncompleteTableError`.

    Table 2 expects every ordered (training, test) pair of distinct domains
    seen in the input, table 3 one row per domain and at least two domains.
    """
    if kind not in TABLE_KINDS:
        raise ValidationError(f"unknown table kind {kind!r}; expected one of {TABLE_KINDS}")
    results = list(results or [])
    if not results:
        if strict:
            raise IncompleteTableError(f"no results for {kind}")
        cols = [c for c in COLUMNS[kind] if c[0] not in OPTIONAL]
        return Table(kind, [h for _, h in cols], [], [], precision)

    cols = [c for c in COLUMNS[kind]
            if c[0] not in OPTIONAL or any(_value(r, c[0]) is not None for r in results)]
    gaps = []
    if kind == "table2":
        domains = _domains(results, ("training_set", "test_set"))
        index = {(r.get("training_set"), r.get("test_set")): r for r in results}
        ordered = []
        for a in domains:
            for b in domains:
                if a == b:
                    continue
                r = index.get((a, b), {"training_set": a, "test_set": b})
                ordered.append(r)
        results = ordered
    elif kind == "table3":
        domains = _domains(results, ("leave_out",))
        if len(domains) < 2:
            raise ValidationError("a leave-one-domain-out table needs at least 2 domains")

    rows = []
    for n, r in enumerate(results):
        row = []
        for key, header in cols:
            v = _value(r, key)
            if v is None:
                gaps.append({"row": n, "column": header})
            row.append(v)
        rows.append(row)
    if gaps and strict:
        raise IncompleteTableError(f"{kind} has {len(gaps)} missing cell(s)", gaps)
    return Table(kind, [h for _, h in cols], rows, gaps, precision)
