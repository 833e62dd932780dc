"""Category construction by k-means on rows of similarity matrices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SimilarityMatrix
from .exceptions import ValidationError

DEFAULT_KS = (2, 3, 4)
SPACES = ("raw", "transformed")


@dataclass(frozen=True, eq=False)
class CategoryPartition:
    k: int
    labels: np.ndarray
    source: str
    inertia: float
    seed: int
    item_ids: tuple | None = None
    history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.intp)
        if labels.ndim != 1 or labels.size == 0:
            raise ValidationError("labels must be a non-empty 1-D array")
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValidationError(f"labels must lie in [0, {self.k})")
        if np.unique(labels).size != self.k:
            raise ValidationError("every cluster must be non-empty")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def to_rows(self):
        ids = self.item_ids or tuple(str(k) for k in range(self.labels.size))
        return list(zip(ids, self.labels.tolist()))


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            unused = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(unused))
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(X, X[[nxt]])[:, 0])
    return X[centers].copy()


def _lloyd(X, C, max_iter):
    k = C.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(X, C)
        new = d.argmin(axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # Reseed an empty cluster at the point farthest from its centre,
            # taken from a cluster that can spare it.
            own = d[np.arange(X.shape[0]), new]
            spare = counts[new] > 1
            far = int(np.argmax(np.where(spare, own, -1.0)))
            counts[new[far]] -= 1
            new[far] = c
            counts[c] = 1
            C[c] = X[far]
            d[:, c] = _sq_dists(X, X[[far]])[:, 0]
        inertia = float(d[np.arange(X.shape[0]), new].sum())
        history.append(inertia)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            C[c] = X[labels == c].mean(axis=0)
    d = _sq_dists(X, C)
    inertia = float(d[np.arange(X.shape[0]), labels].sum())
    history.append(inertia)
    return labels, inertia, history


def kmeans(rows, k: int, n_restarts: int = 10, max_iter: int = 300, seed: int = 0,
           source: str = "raw", item_ids=None) -> CategoryPartition:
    """Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart wins.

    Restart seeds are spawned from ``seed`` so results are reproducible;
    ties in inertia go to the earliest restart.
    """
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"rows must be a 2-D array, got shape {X.shape}")
    n = X.shape[0]
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the number of items ({n})")
    if not np.all(np.isfinite(X)):
        raise ValidationError("rows contain non-finite values")
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_restarts):
        rng = np.random.default_rng(child)
        labels, inertia, history = _lloyd(X, _kmeanspp(X, k, rng), max_iter)
        if best is None or inertia < best[1]:
            best = (labels, inertia, history)
    labels, inertia, history = best
    return CategoryPartition(k, _canonical(labels), source, inertia, seed,
                             tuple(item_ids) if item_ids is not None else None, tuple(history))


def _canonical(labels):
    # Relabel clusters by order of first appearance.
    mapping = {}
    return np.array([mapping.setdefault(int(c), len(mapping)) for c in labels])


def similarity_rows(S: SimilarityMatrix) -> np.ndarray:
    """Rows of ``S`` as item representations; an undefined diagonal becomes the row max."""
    V = np.array(S.values if isinstance(S, SimilarityMatrix) else S, dtype=np.float64)
    off = ~np.eye(V.shape[0], dtype=bool)
    if np.any(~np.isfinite(V[off])):
        raise ValidationError("similarity matrix has missing pairs; cannot cluster its rows")
    diag = np.diag(V)
    if np.any(~np.isfinite(diag)):
        np.fill_diagonal(V, np.where(off, V, -np.inf).max(axis=1))
    return V


def build_categories(S: SimilarityMatrix, k: int, seed: int = 0, source: str = "raw",
                     n_restarts: int = 10, max_iter: int = 300) -> CategoryPartition:
    """k-means categories from the rows of a (raw or transformed) similarity matrix."""
    if source not in SPACES:
        raise ValidationError(f"source must be one of {SPACES}, got {source!r}")
    ids = S.item_ids if isinstance(S, SimilarityMatrix) else None
    return kmeans(similarity_rows(S), k, n_restarts, max_iter, seed, source, ids)


def adjusted_rand_index(a, b) -> float:
    """Pair-counting agreement between two labelings, corrected for chance."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        return float((x * (x - 1) // 2).sum())

    n = a.size
    total = n * (n - 1) / 2
    index = pairs(table)
    rows, cols = pairs(table.sum(1)), pairs(table.sum(0))
    expected = rows * cols / total if total else 0.0
    maximum = (rows + cols) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def save_partition(P: CategoryPartition, path, header_comments: dict | None = None) -> Path:
    """Write ``item_id,cluster`` rows, optionally after ``# key=value`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, value in (header_comments or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "cluster"])
        w.writerows(P.to_rows())
    return path


def condition_grid(domains, ks=DEFAULT_KS, spaces=SPACES) -> list[dict]:
    """Between-subjects conditions: space x k x domain."""
    return [{"domain": d, "space": s, "k": int(k)} for d in domains for s in spaces for k in ks]


def write_manifest(path, domains, ks=DEFAULT_KS, spaces=SPACES, extra: dict | None = None) -> Path:
    path = Path(path)
    doc = {"conditions": condition_grid(domains, ks, spaces), **(extra or {})}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
