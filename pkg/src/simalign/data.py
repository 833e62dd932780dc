"""Core data model: feature matrices, similarity matrices, ratings and file I/O.

Matrices are stored as read-only float64 arrays.  Undefined similarity cells
(the diagonal of an empirical matrix, or pairs that received no ratings) are
stored as NaN; the :attr:`SimilarityMatrix.observed_mask` property tells them
apart from real values.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DimensionError,
    IngestionError,
    ParseError,
    ValidationError,
    ZeroVarianceWarning,
)

RATING_SCALE = (0.0, 10.0)
SYMMETRY_RTOL = 1e-9

_DELIMITERS = {"csv": ",", "tsv": "\t"}


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _check_ids(item_ids, n) -> tuple[str, ...]:
    ids = tuple(str(i) for i in item_ids)
    if len(ids) != n:
        raise DimensionError(f"expected {n} item ids, got {len(ids)}")
    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise ValidationError(f"duplicate item id {dup!r}")
    return ids


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Items x features representation; rows are stimuli."""

    values: np.ndarray
    item_ids: tuple[str, ...]
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise DimensionError(f"feature values must be 2-D, got shape {values.shape}")
        n, d = values.shape
        if n < 2 or d < 1:
            raise DimensionError(f"need at least 2 items and 1 feature, got {n}x{d}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(f"non-finite feature value at row {r}, column {c}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "item_ids", _check_ids(self.item_ids, n))
        if self.feature_names is not None:
            names = tuple(str(x) for x in self.feature_names)
            if len(names) != d:
                raise DimensionError(f"expected {d} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)

    @property
    def n_items(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "FeatureMatrix":
        return FeatureMatrix(values, self.item_ids, self.feature_names)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Symmetric items x items similarity matrix.

    ``diagonal_defined=None`` infers the flag from whether the diagonal is
    finite.  When the flag is False the diagonal is overwritten with NaN.
    Off-diagonal NaN cells are treated as missing pairs.
    """

    values: np.ndarray
    item_ids: tuple[str, ...]
    diagonal_defined: bool | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"similarity matrix must be square, got {values.shape}")
        n = values.shape[0]
        if n < 2:
            raise DimensionError("similarity matrix needs at least 2 items")
        if np.any(np.isinf(values)):
            r, c = np.argwhere(np.isinf(values))[0]
            raise ValidationError(f"infinite similarity at row {r}, column {c}")
        diag = np.diag(values)
        flag = self.diagonal_defined
        if flag is None:
            flag = bool(np.all(np.isfinite(diag)))
        elif flag and not np.all(np.isfinite(diag)):
            raise ValidationError("diagonal_defined=True but the diagonal has undefined cells")
        if not flag:
            np.fill_diagonal(values, np.nan)
        nan = np.isnan(values)
        if np.any(nan != nan.T):
            r, c = np.argwhere(nan != nan.T)[0]
            raise ValidationError(f"missing-cell pattern is not symmetric at ({r}, {c})")
        filled = np.where(nan, 0.0, values)
        scale = max(1.0, float(np.max(np.abs(filled))))
        gap = np.abs(filled - filled.T)
        if np.any(gap > SYMMETRY_RTOL * scale):
            r, c = np.unravel_index(np.argmax(gap), gap.shape)
            raise ValidationError(
                f"similarity matrix is not symmetric: |s[{r},{c}] - s[{c},{r}]| = {gap[r, c]:.3g}"
            )
        values = (values + values.T) / 2.0
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "item_ids", _check_ids(self.item_ids, n))
        object.__setattr__(self, "diagonal_defined", flag)

    @property
    def n_items(self) -> int:
        return self.values.shape[0]

    @property
    def observed_mask(self) -> np.ndarray:
        """Boolean matrix of defined off-diagonal cells."""
        mask = np.isfinite(self.values)
        np.fill_diagonal(mask, False)
        return mask

    def missing_pairs(self) -> list[tuple[int, int]]:
        """Lower-triangle pairs (i > j) without a value."""
        i, j = np.tril_indices(self.n_items, -1)
        miss = ~np.isfinite(self.values[i, j])
        return [(int(a), int(b)) for a, b in zip(i[miss], j[miss])]

    @property
    def is_complete(self) -> bool:
        return not self.missing_pairs()

    def lower_triangle(self, pairs=None) -> np.ndarray:
        if pairs is None:
            i, j = np.tril_indices(self.n_items, -1)
        else:
            i, j = pairs.i, pairs.j
        return self.values[i, j]


@dataclass(frozen=True)
class RatingRecord:
    item_a: str
    item_b: str
    rating: float
    rater_id: str = ""

    def __post_init__(self):
        if self.item_a == self.item_b:
            raise ValidationError(f"self-pair rating for item {self.item_a!r}")
        if not math.isfinite(self.rating):
            raise ValidationError(f"non-finite rating for pair ({self.item_a}, {self.item_b})")


@dataclass(frozen=True, eq=False)
class DomainDataset:
    name: str
    features: FeatureMatrix
    similarities: SimilarityMatrix
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.item_ids != self.similarities.item_ids:
            raise ValidationError(
                f"dataset {self.name!r}: feature and similarity item ids differ in content or order"
            )

    @property
    def n_items(self) -> int:
        return self.features.n_items


def aggregate_ratings(
    records: Iterable[RatingRecord],
    item_ids: Sequence[str],
    scale: tuple[float, float] = RATING_SCALE,
) -> SimilarityMatrix:
    """Average raw ratings into a similarity matrix.

    Each off-diagonal cell is the mean of all ratings of that unordered pair,
    computed with an exactly rounded sum so the result does not depend on
    record order.  Unrated pairs stay NaN (see ``missing_pairs``) and the
    diagonal is undefined.
    """
    ids = _check_ids(item_ids, len(item_ids))
    index = {item: k for k, item in enumerate(ids)}
    lo, hi = scale
    cells: dict[tuple[int, int], list[float]] = defaultdict(list)
    for rec in records:
        for item in (rec.item_a, rec.item_b):
            if item not in index:
                raise IngestionError(f"rating references unknown item id {item!r}")
        if not lo <= rec.rating <= hi:
            raise ValidationError(
                f"rating {rec.rating} for pair ({rec.item_a}, {rec.item_b}) outside scale [{lo}, {hi}]"
            )
        a, b = index[rec.item_a], index[rec.item_b]
        cells[(max(a, b), min(a, b))].append(float(rec.rating))
    n = len(ids)
    values = np.full((n, n), np.nan)
    for (a, b), ratings in cells.items():
        values[a, b] = values[b, a] = math.fsum(ratings) / len(ratings)
    return SimilarityMatrix(values, ids, diagonal_defined=False)


def rating_counts(records: Iterable[RatingRecord], item_ids: Sequence[str]) -> np.ndarray:
    """Symmetric matrix of the number of ratings per pair."""
    index = {item: k for k, item in enumerate(item_ids)}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for rec in records:
        a, b = index[rec.item_a], index[rec.item_b]
        counts[a, b] += 1
        counts[b, a] += 1
    return counts


def rescale_similarities(S: SimilarityMatrix, scale=RATING_SCALE) -> SimilarityMatrix:
    """Map values linearly from ``scale`` onto [0, 1]."""
    lo, hi = scale
    return SimilarityMatrix((S.values - lo) / (hi - lo), S.item_ids, S.diagonal_defined)


def zscore_normalize(F: FeatureMatrix, ddof: int = 0) -> FeatureMatrix:
    """Standardize every feature column to mean 0 and unit standard deviation.

    ``ddof=0`` uses the population standard deviation.  Constant columns are
    set to zero and reported through a :class:`ZeroVarianceWarning`.
    """
    X = F.values
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=ddof)
    scale = np.maximum(np.abs(X).max(axis=0), 1.0)
    constant = std <= 1e-12 * scale
    safe = np.where(constant, 1.0, std)
    Z = (X - mean) / safe
    Z[:, constant] = 0.0
    if np.any(constant):
        cols = np.flatnonzero(constant).tolist()
        warnings.warn(
            f"{len(cols)} zero-variance feature column(s) mapped to zeros: {cols[:20]}",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    return F.with_values(Z)


# --------------------------------------------------------------------------
# File I/O


def _delimiter(format: str) -> str:
    try:
        return _DELIMITERS[format]
    except KeyError:
        raise ValidationError(f"unknown file format {format!r}; expected one of {sorted(_DELIMITERS)}")


def _rows(path, format):
    """Yield (line_number, row) for non-comment, non-blank rows."""
    path = Path(path)
    if not path.exists():
        raise ParseError("file does not exist", path=path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=_delimiter(format))
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].startswith("#"):
                continue
            yield reader.line_num, row


def _parse_float(text, path, line, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in {what}", path=path, line=line)
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r} in {what}", path=path, line=line)
    return value


def format_float(x: float, precision: int | None = None) -> str:
    if precision is None:
        return repr(float(x))
    return f"{x:.{precision}g}"


def load_features(path, format: str = "csv") -> FeatureMatrix:
    """Read a feature file: header row, then one row per item (id, features...)."""
    rows = _rows(path, format)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise ParseError("empty feature file", path=path)
    names = [h.strip() for h in header[1:]]
    if not names:
        raise ParseError("header has no feature columns", path=path, line=header_line)
    ids, values, seen = [], [], {}
    for line, row in rows:
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} columns, found {len(row)}", path=path, line=line
            )
        item = row[0].strip()
        if item in seen:
            raise ParseError(
                f"duplicate item id {item!r} (first seen on line {seen[item]})", path=path, line=line
            )
        seen[item] = line
        ids.append(item)
        values.append(
            [
                _parse_float(cell, path, line, f"row {item!r}, column {names[k]!r}")
                for k, cell in enumerate(row[1:])
            ]
        )
    if len(ids) < 2:
        raise ParseError(f"need at least 2 items, found {len(ids)}", path=path)
    return FeatureMatrix(np.array(values), ids, names)


def save_features(F: FeatureMatrix, path, format: str = "csv", precision: int | None = None,
                  header_comments: dict | None = None) -> Path:
    path = Path(path)
    names = F.feature_names or tuple(f"f{k}" for k in range(F.n_features))
    with open(path, "w", newline="") as fh:
        _write_comments(fh, header_comments)
        writer = csv.writer(fh, delimiter=_delimiter(format), lineterminator="\n")
        writer.writerow(["item_id", *names])
        for item, row in zip(F.item_ids, F.values):
            writer.writerow([item, *(format_float(v, precision) for v in row)])
    return path


def load_similarities(path, format: str = "csv") -> SimilarityMatrix:
    """Read a square similarity file with ids in the first row and column.

    Empty cells are allowed on the diagonal (undefined self-similarity) and
    off the diagonal (missing pair); textual NaN/inf is rejected.
    """
    rows = _rows(path, format)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise ParseError("empty similarity file", path=path)
    ids = [h.strip() for h in header[1:]]
    n = len(ids)
    if len(set(ids)) != n:
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ParseError(f"duplicate item id {dup!r} in header", path=path, line=header_line)
    values = np.full((n, n), np.nan)
    lines = []
    r = -1
    for r, (line, row) in enumerate(rows):
        if r >= n:
            raise ParseError(f"more rows than the {n} header ids", path=path, line=line)
        if len(row) != n + 1:
            raise ParseError(f"expected {n + 1} columns, found {len(row)}", path=path, line=line)
        if row[0].strip() != ids[r]:
            raise ParseError(
                f"row id {row[0].strip()!r} does not match header id {ids[r]!r}", path=path, line=line
            )
        lines.append(line)
        for c, cell in enumerate(row[1:]):
            if cell.strip():
                values[r, c] = _parse_float(cell, path, line, f"row {ids[r]!r}, column {ids[c]!r}")
    if r + 1 != n:
        raise ParseError(f"expected {n} rows, found {r + 1}", path=path)
    nan = np.isnan(values)
    offdiag_gap = (nan != nan.T)
    if np.any(offdiag_gap):
        a, b = np.argwhere(offdiag_gap)[0]
        raise ParseError(
            f"cell ({ids[a]}, {ids[b]}) is empty but its mirror is not", path=path, line=lines[a]
        )
    filled = np.where(nan, 0.0, values)
    scale = max(1.0, float(np.max(np.abs(filled))))
    gap = np.abs(filled - filled.T)
    if np.any(gap > SYMMETRY_RTOL * scale):
        a, b = np.unravel_index(np.argmax(gap), gap.shape)
        raise ParseError(
            f"asymmetric similarities for ({ids[a]}, {ids[b]}): {values[a, b]!r} vs {values[b, a]!r}",
            path=path,
            line=lines[a],
        )
    return SimilarityMatrix(values, ids)


def save_similarities(S: SimilarityMatrix, path, format: str = "csv", precision: int | None = None,
                      header_comments: dict | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        _write_comments(fh, header_comments)
        writer = csv.writer(fh, delimiter=_delimiter(format), lineterminator="\n")
        writer.writerow(["", *S.item_ids])
        for item, row in zip(S.item_ids, S.values):
            writer.writerow([item, *("" if np.isnan(v) else format_float(v, precision) for v in row)])
    return path


def load_ratings(path, format: str = "csv") -> list[RatingRecord]:
    """Read triplet ratings with header ``item_a,item_b,rating,rater_id``."""
    rows = _rows(path, format)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise ParseError("empty ratings file", path=path)
    header = [h.strip() for h in header]
    required = ["item_a", "item_b", "rating"]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"ratings header lacks columns {missing}", path=path, line=header_line)
    col = {name: header.index(name) for name in header}
    records = []
    for line, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(row)}", path=path, line=line)
        rating = _parse_float(row[col["rating"]], path, line, "rating")
        try:
            records.append(
                RatingRecord(
                    row[col["item_a"]].strip(),
                    row[col["item_b"]].strip(),
                    rating,
                    row[col["rater_id"]].strip() if "rater_id" in col else "",
                )
            )
        except ValidationError as exc:
            raise ParseError(str(exc), path=path, line=line)
    return records


def save_ratings(records: Iterable[RatingRecord], path, format: str = "csv") -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=_delimiter(format), lineterminator="\n")
        writer.writerow(["item_a", "item_b", "rating", "rater_id"])
        for rec in records:
            writer.writerow([rec.item_a, rec.item_b, format_float(rec.rating), rec.rater_id])
    return path


def load_dataset(name: str, features_path, similarities_path, format: str = "csv",
                 zscore: bool = False) -> DomainDataset:
    F = load_features(features_path, format)
    if zscore:
        F = zscore_normalize(F)
    S = load_similarities(similarities_path, format)
    return DomainDataset(name, F, S)


def _write_comments(fh, comments):
    for key, value in (comments or {}).items():
        fh.write(f"# {key}={value}\n")
