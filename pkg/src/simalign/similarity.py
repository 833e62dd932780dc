"""Model similarities computed from features, plain or diagonally weighted."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FeatureMatrix, SimilarityMatrix, format_float
from .exceptions import DimensionError, ParseError, ValidationError


@dataclass(frozen=True, eq=False)
class WeightVector:
    """One weight per feature dimension (the diagonal of the weight matrix)."""

    values: np.ndarray
    nonnegative: bool = False
    meta: dict | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if values.size < 1:
            raise DimensionError("weight vector is empty")
        if not np.all(np.isfinite(values)):
            raise ValidationError("weight vector has non-finite entries")
        if self.nonnegative and np.any(values < 0):
            raise ValidationError("weight vector flagged nonnegative has negative entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_features(self) -> int:
        return self.values.size

    @classmethod
    def ones(cls, n_features: int) -> "WeightVector":
        return cls(np.ones(n_features), nonnegative=True)

    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()


def _feature_values(F):
    return F.values if isinstance(F, FeatureMatrix) else np.asarray(F, dtype=np.float64)


def _weight_values(w):
    return w.values if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64).reshape(-1)


def _symmetric_product(A, B):
    # Upper triangle mirrored so the result is exactly symmetric.
    S = A @ B.T
    iu = np.triu_indices(S.shape[0], 1)
    S.T[iu] = S[iu]
    return S


def inner_product_similarity(F: FeatureMatrix) -> SimilarityMatrix:
    """Similarity as the inner product of item feature vectors, ``F F^T``."""
    X = _feature_values(F)
    ids = F.item_ids if isinstance(F, FeatureMatrix) else [str(k) for k in range(X.shape[0])]
    # A distinct right operand keeps numpy on the same matmul kernel as the
    # weighted case, so unit weights reproduce this result bit for bit.
    return SimilarityMatrix(_symmetric_product(X, X.copy()), ids, diagonal_defined=True)


def weighted_similarity(F: FeatureMatrix, w: WeightVector) -> SimilarityMatrix:
    """Weighted inner products ``s_ij = sum_k w_k f_ik f_jk``."""
    X = _feature_values(F)
    wv = _weight_values(w)
    if wv.size != X.shape[1]:
        raise DimensionError(f"weight vector has {wv.size} entries but features have {X.shape[1]}")
    ids = F.item_ids if isinstance(F, FeatureMatrix) else [str(k) for k in range(X.shape[0])]
    return SimilarityMatrix(_symmetric_product(X * wv, X), ids, diagonal_defined=True)


def pair_predictions(F, w, pairs) -> np.ndarray:
    """Weighted similarity for selected pairs only, without the full matrix."""
    X = _feature_values(F)
    wv = _weight_values(w)
    if wv.size != X.shape[1]:
        raise DimensionError(f"weight vector has {wv.size} entries but features have {X.shape[1]}")
    return np.einsum("rk,rk,k->r", X[pairs.i], X[pairs.j], wv)


def rescale_features(F: FeatureMatrix, w: WeightVector) -> FeatureMatrix:
    """Multiply each feature by the square root of its (nonnegative) weight.

    The inner products of the rescaled features reproduce
    ``weighted_similarity(F, w)``.
    """
    wv = _weight_values(w)
    if wv.size != F.n_features:
        raise DimensionError(f"weight vector has {wv.size} entries but features have {F.n_features}")
    if np.any(wv < 0):
        raise ValidationError(
            "cannot rescale features by negative weights; fit with the nonnegative solver "
            "(nonnegative=True) first"
        )
    return F.with_values(F.values * np.sqrt(wv))


def save_weights(w: WeightVector, path, lam: float | None = None, provenance: str | None = None,
                 extra: dict | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if lam is not None:
            fh.write(f"# lambda={format_float(lam)}\n")
        if provenance is not None:
            fh.write(f"# provenance={provenance}\n")
        for key, value in (extra or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature_index", "value"])
        for k, v in enumerate(w.values):
            writer.writerow([k, format_float(v)])
    return path


def load_weights(path) -> WeightVector:
    path = Path(path)
    meta, values = {}, []
    with open(path, newline="") as fh:
        header_seen = False
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line.replace(" ", "") != "feature_index,value":
                    raise ParseError(f"unexpected weight header {line!r}", path=path, line=line_no)
                header_seen = True
                continue
            idx, _, val = line.partition(",")
            try:
                if int(idx) != len(values):
                    raise ParseError(f"feature_index {idx} out of order", path=path, line=line_no)
                values.append(float(val))
            except ValueError:
                raise ParseError(f"malformed weight row {line!r}", path=path, line=line_no)
    if not values:
        raise ParseError("no weights found", path=path)
    return WeightVector(values, meta=meta)
