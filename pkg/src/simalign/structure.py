"""Spatial and taxonomic structure of similarity matrices.

Non-metric MDS (stress-1, SMACOF majorization with monotone regression) seeded
by classical MDS, and agglomerative clustering with centroid linkage.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.spatial.distance import pdist, squareform

from .data import SimilarityMatrix
from .exceptions import DimensionError, ValidationError

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


# --------------------------------------------------------------------------
# Similarity -> distance


def sim_to_dist(S, mode: str = "max-shift") -> np.ndarray:
    """Convert similarities to a symmetric zero-diagonal distance matrix.

    ``max-shift``: ``d_ij = max_offdiag(S) - s_ij`` (reverses the rank order).
    ``self-sim``:  ``d_ij = sqrt(max(0, s_ii + s_jj - 2 s_ij))``, which needs a
    defined diagonal.
    """
    values = S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)
    n = values.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(~np.isfinite(values[off])):
        raise ValidationError("similarity matrix has missing off-diagonal pairs")
    if mode == "max-shift":
        D = values[off].max() - values
    elif mode == "self-sim":
        diag = np.diag(values)
        if (isinstance(S, SimilarityMatrix) and not S.diagonal_defined) or np.any(~np.isfinite(diag)):
            raise ValidationError("self-sim distances need defined self-similarities on the diagonal")
        D = np.sqrt(np.maximum(0.0, diag[:, None] + diag[None, :] - 2.0 * values))
    else:
        raise ValidationError(f"unknown conversion {mode!r}; expected 'max-shift' or 'self-sim'")
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


def _check_distances(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionError(f"distance matrix must be square, got {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValidationError("distance matrix has non-finite entries")
    if np.any(np.abs(D - D.T) > 1e-9 * max(1.0, np.abs(D).max())):
        raise ValidationError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if np.any(D < 0):
        raise ValidationError("distance matrix has negative entries")
    return (D + D.T) / 2.0


# --------------------------------------------------------------------------
# Embeddings


@dataclass
class Embedding:
    coords: np.ndarray
    stress: float
    n_restarts_used: int = 1
    converged: bool = True
    stop_reason: str = "exact"
    n_iter: int = 0
    history: list = field(default_factory=list)
    restart_stress: list = field(default_factory=list)

    @property
    def n_items(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


def stress1(distances, disparities) -> float:
    """Kruskal stress-1 ``sqrt(sum (d - dhat)^2 / sum d^2)`` on condensed vectors."""
    d = np.asarray(distances, dtype=np.float64)
    dn = float(d @ d)
    if dn == 0.0:
        return 0.0 if np.allclose(disparities, 0.0) else 1.0
    r = d - np.asarray(disparities, dtype=np.float64)
    return float(np.sqrt((r @ r) / dn))


def classical_mds(D, dim: int = 2) -> Embedding:
    """Torgerson scaling: eigendecomposition of the double-centred squared distances.

    When fewer than ``dim`` positive eigenvalues exist the remaining
    coordinates are zero and a warning is issued.
    """
    D = _check_distances(D)
    n = D.shape[0]
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D * D) @ J
    B = (B + B.T) / 2.0
    evals, evecs = np.linalg.eigh(B)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    thresh = max(abs(evals[0]), 1.0) * n * _EPS if evals.size else 0.0
    k = min(dim, n)
    positive = evals[:k] > thresh
    if positive.sum() < dim:
        warnings.warn(
            f"only {int(positive.sum())} positive eigenvalue(s) for dim={dim}; padding with zeros",
            stacklevel=2,
        )
    coords = np.zeros((n, dim))
    coords[:, :k] = evecs[:, :k] * np.sqrt(np.where(positive, evals[:k], 0.0))
    coords -= coords.mean(axis=0)
    return Embedding(coords, stress1(pdist(coords), squareform(D, checks=False)))


def _pava_python(y) -> np.ndarray:
    """Pool-adjacent-violators: least-squares nondecreasing fit of ``y``."""
    means, sizes = [], []
    for v in np.asarray(y, dtype=np.float64):
        means.append(float(v))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m, s = means.pop(), sizes.pop()
            total = sizes[-1] + s
            means[-1] = (means[-1] * sizes[-1] + m * s) / total
            sizes[-1] = total
    return np.repeat(means, sizes)


def _pava_scipy(y) -> np.ndarray:
    return isotonic_regression(np.asarray(y, dtype=np.float64)).x


def _tie_order(dissimilarities, distances) -> np.ndarray:
    # Primary tie approach: tied dissimilarities may take any order, so sort
    # them by current distance.
    return np.lexsort((distances, dissimilarities))


def monotone_regression(dissimilarities, distances, method: str = "scipy") -> np.ndarray:
    """Disparities: isotonic fit of ``distances`` against the order of ``dissimilarities``.

    Returns values aligned with the input order, nondecreasing along
    increasing dissimilarity.  Tied dissimilarities follow the primary
    approach (no order constraint within a tie block).
    """
    delta = np.asarray(dissimilarities, dtype=np.float64).reshape(-1)
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    if delta.shape != d.shape:
        raise DimensionError("dissimilarities and distances differ in length")
    order = _tie_order(delta, d)
    pava = {"scipy": _pava_scipy, "python": _pava_python}.get(method)
    if pava is None:
        raise ValidationError(f"unknown PAVA method {method!r}")
    out = np.empty_like(d)
    out[order] = pava(d[order])
    return out


class _Disparities:
    """Monotone regression with the dissimilarity order precomputed."""

    def __init__(self, delta):
        self.delta = delta
        self.base_order = np.argsort(delta, kind="stable")
        self.has_ties = bool(np.any(np.diff(delta[self.base_order]) == 0))

    def __call__(self, d):
        order = _tie_order(self.delta, d) if self.has_ties else self.base_order
        out = np.empty_like(d)
        out[order] = _pava_scipy(d[order])
        return out


def _guttman(X, d, dhat):
    n = X.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, dhat / d, 0.0)
    B = -squareform(ratio, checks=False)
    B[np.diag_indices(n)] = -B.sum(axis=1)
    return B @ X / n


def _smacof_run(delta, X0, max_iter, tol, disparity):
    X = X0 - X0.mean(axis=0)
    n_pairs = delta.size
    history = []
    prev = np.inf
    reason, converged = "max_iter", False
    it = 0
    for it in range(max_iter):
        d = pdist(X)
        dn2 = float(d @ d)
        if dn2 == 0.0:
            reason, converged = "degenerate", True
            history.append(0.0)
            break
        p = disparity(d)
        r = d - p
        stress = float(np.sqrt((r @ r) / dn2))
        history.append(stress)
        if stress <= 1e-15:
            reason, converged = "exact", True
            break
        if it > 0:
            gain = prev - stress
            if gain < tol:
                reason, converged = "tol", True
                break
            if gain <= _EPS * prev:
                reason, converged = "precision", True
                break
        prev = stress
        pn = float(np.sqrt(p @ p))
        if pn == 0.0:
            reason, converged = "degenerate", True
            break
        dhat = p * (np.sqrt(n_pairs) / pn)
        alpha = float(d @ dhat) / dn2
        X *= alpha
        d *= alpha
        X = _guttman(X, d, dhat)
    else:
        it = max_iter
    return X - X.mean(axis=0), history[-1] if history else 0.0, history, it, reason, converged


def nonmetric_mds(
    D,
    dim: int = 2,
    max_iter: int = 10_000,
    tol: float = 1e-100,
    n_init: int = 4,
    seed: int = 0,
) -> Embedding:
    """Non-metric MDS minimizing Kruskal stress-1.

    Each iteration fits disparities by monotone regression, rescales the
    configuration optimally against them and applies a Guttman transform;
    stress-1 is non-increasing.  A run stops on ``max_iter``, on
    improvement below ``tol``, or once the improvement drops to machine
    precision (tolerances such as 1e-100 are otherwise unreachable).

    Restart 0 starts from classical MDS; restarts 1.. perturb it with seeded
    Gaussian noise.  The lowest-stress run is returned (ties: lowest index).
    """
    D = _check_distances(D)
    n = D.shape[0]
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    if n < 2:
        raise ValidationError("need at least 2 items to embed")
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")
    delta = squareform(D, checks=False)
    disparity = _Disparities(delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = classical_mds(D, dim).coords
    rms = float(np.sqrt(np.mean(base**2)))
    children = np.random.SeedSequence(seed).spawn(n_init)
    best = None
    restart_stress = []
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        if r == 0 and rms > 0:
            X0 = base.copy()
        else:
            scale = 0.5 * rms if rms > 0 else 1.0
            X0 = base + rng.normal(scale=scale, size=base.shape)
        coords, stress, history, n_iter, reason, converged = _smacof_run(
            delta, X0, max_iter, tol, disparity
        )
        restart_stress.append(stress)
        log.debug("nmds restart %d: stress=%.6g after %d iterations (%s)", r, stress, n_iter, reason)
        if best is None or stress < best.stress:
            best = Embedding(coords, stress, n_init, converged, reason, n_iter, history)
    best.restart_stress = restart_stress
    return best


# --------------------------------------------------------------------------
# Hierarchical clustering


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration history.

    ``merges[t] = (a, b, height, size)`` joins clusters ``a < b`` into cluster
    ``n_leaves + t``; leaves are ``0..n_leaves-1``.  Heights can decrease
    from one merge to the next under centroid linkage.
    """

    merges: tuple
    n_leaves: int
    item_ids: tuple | None = None

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValidationError(f"{len(self.merges)} merges for {self.n_leaves} leaves")

    @property
    def heights(self) -> np.ndarray:
        return np.array([m[2] for m in self.merges])

    def linkage_matrix(self) -> np.ndarray:
        """SciPy-style ``(n-1) x 4`` linkage array."""
        return np.array([[a, b, h, s] for a, b, h, s in self.merges], dtype=np.float64)

    def members(self, cluster: int) -> list[int]:
        stack, out = [cluster], []
        while stack:
            c = stack.pop()
            if c < self.n_leaves:
                out.append(c)
            else:
                a, b, _, _ = self.merges[c - self.n_leaves]
                stack.extend((b, a))
        return sorted(out)

    def cut(self, n_clusters: int) -> np.ndarray:
        """Flat labels from undoing the last ``n_clusters - 1`` merges."""
        if not 1 <= n_clusters <= self.n_leaves:
            raise ValidationError(f"n_clusters must lie in [1, {self.n_leaves}]")
        parent = list(range(2 * self.n_leaves - 1))

        def root(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for t, (a, b, _, _) in enumerate(self.merges[: self.n_leaves - n_clusters]):
            new = self.n_leaves + t
            parent[root(a)] = new
            parent[root(b)] = new
        roots = [root(k) for k in range(self.n_leaves)]
        relabel = {}
        return np.array([relabel.setdefault(r, len(relabel)) for r in roots])

    def to_newick(self, item_ids=None) -> str:
        """Newick string; negative branch lengths from inversions are clamped to 0."""
        ids = item_ids or self.item_ids or [str(k) for k in range(self.n_leaves)]
        text = {k: _newick_label(ids[k]) for k in range(self.n_leaves)}
        height = {k: 0.0 for k in range(self.n_leaves)}
        for t, (a, b, h, _) in enumerate(self.merges):
            new = self.n_leaves + t
            la = max(0.0, h - height[a])
            lb = max(0.0, h - height[b])
            text[new] = f"({text.pop(a)}:{la!r},{text.pop(b)}:{lb!r})"
            height[new] = h
        return text[2 * self.n_leaves - 2] + ";"


def _newick_label(label: str) -> str:
    if any(c in label for c in " ():;,[]'"):
        return "'" + label.replace("'", "''") + "'"
    return label


def hca_centroid(X, distances: bool = False, item_ids=None) -> Dendrogram:
    """Agglomerative clustering with centroid linkage.

    ``X`` is an items x dims coordinate array, or a distance matrix when
    ``distances=True``; distances are first embedded by classical MDS at full
    rank because centroids need coordinates.  Repeatedly merges the two
    clusters whose centroids are closest (Euclidean); ties go to the
    lexicographically smallest cluster-id pair.
    """
    if distances:
        D = _check_distances(X)
        n = D.shape[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            coords = classical_mds(D, max(1, n - 1)).coords
    else:
        coords = np.asarray(X, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
    n = coords.shape[0]
    if n < 2:
        raise ValidationError("hierarchical clustering needs at least 2 items")
    if not np.all(np.isfinite(coords)):
        raise ValidationError("coordinates contain non-finite values")
    m = 2 * n - 1
    cent = np.zeros((m, coords.shape[1]))
    cent[:n] = coords
    size = np.zeros(m, dtype=np.int64)
    size[:n] = 1
    dist = np.full((m, m), np.inf)
    iu = np.triu_indices(n, 1)
    dist[:n, :n][iu] = pdist(coords)
    alive = np.zeros(m, dtype=bool)
    alive[:n] = True
    merges = []
    for t in range(n - 1):
        a, b = divmod(int(np.argmin(dist)), m)
        h = float(dist[a, b])
        new = n + t
        size[new] = size[a] + size[b]
        cent[new] = (size[a] * cent[a] + size[b] * cent[b]) / size[new]
        alive[[a, b]] = False
        dist[[a, b], :] = np.inf
        dist[:, [a, b]] = np.inf
        others = np.flatnonzero(alive)
        if others.size:
            dist[others, new] = np.sqrt(np.sum((cent[others] - cent[new]) ** 2, axis=1))
        alive[new] = True
        merges.append((a, b, h, int(size[new])))
    ids = tuple(item_ids) if item_ids is not None else None
    return Dendrogram(tuple(merges), n, ids)
