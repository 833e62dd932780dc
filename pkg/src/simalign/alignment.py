"""Learning diagonal feature weights from pairwise similarities.

Each unordered item pair (i, j) becomes one regression row, the elementwise
product of the two items' feature vectors, with the observed similarity as
target.  Weights are fit by ridge regression without an intercept::

    minimize ||X w - y||^2 + lam * ||w||^2

Three solvers are provided: a closed form (eigendecomposition of the Gram
matrix, reusable across penalties), conjugate-gradient least squares, and a
nonnegative coordinate-descent solver whose output can be turned into a
feature rescaling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import FeatureMatrix, SimilarityMatrix
from .exceptions import (
    ConvergenceError,
    DimensionError,
    EmptyDesignError,
    SingularSystemError,
    ValidationError,
)
from .similarity import WeightVector

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes of dense design matrix
DEFAULT_MAX_DENSE_FEATURES = 20_000
_BLOCK_ROWS = 4096


@dataclass(frozen=True, eq=False)
class PairList:
    """Ordered item-index pairs with ``i > j``."""

    i: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.intp).reshape(-1)
        j = np.asarray(self.j, dtype=np.intp).reshape(-1)
        if i.shape != j.shape:
            raise DimensionError("pair index arrays differ in length")
        if np.any(i <= j):
            raise ValidationError("pairs must satisfy i > j (no self-pairs)")
        if i.size and np.unique(i * (int(i.max()) + 1) + j).size != i.size:
            raise ValidationError("pair list contains duplicates")
        i.setflags(write=False)
        j.setflags(write=False)
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)

    def __len__(self):
        return self.i.size

    def __iter__(self):
        return ((int(a), int(b)) for a, b in zip(self.i, self.j))

    def __getitem__(self, k):
        if isinstance(k, (int, np.integer)):
            return int(self.i[k]), int(self.j[k])
        return PairList(self.i[k], self.j[k])

    def tolist(self):
        return list(self)

    def involves(self, items) -> np.ndarray:
        """Boolean per pair: does it touch any of ``items``?"""
        items = np.asarray(list(items), dtype=np.intp)
        return np.isin(self.i, items) | np.isin(self.j, items)

    def within(self, items) -> np.ndarray:
        """Boolean per pair: are both members in ``items``?"""
        items = np.asarray(list(items), dtype=np.intp)
        return np.isin(self.i, items) & np.isin(self.j, items)


def enumerate_pairs(n: int) -> PairList:
    """Lower-triangle pairs in row order: (1,0), (2,0), (2,1), (3,0), ..."""
    if n < 2:
        raise ValidationError(f"need at least 2 items to form pairs, got {n}")
    i, j = np.tril_indices(n, -1)
    return PairList(i, j)


class DesignMatrix:
    """Regression rows plus targets.

    Backed either by a dense array or, for large problems, by the feature
    matrix and pair list with rows generated in blocks on demand.  All solver
    access goes through ``matvec``/``rmatvec``/``gram``/``xty``.
    """

    def __init__(self, values=None, targets=None, *, features=None, pairs=None,
                 block_rows: int = _BLOCK_ROWS):
        if targets is None:
            raise ValidationError("design matrix needs targets")
        self.targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        self.pairs = pairs
        self.block_rows = block_rows
        if values is not None:
            X = np.asarray(values, dtype=np.float64)
            if X.ndim != 2:
                raise DimensionError(f"design values must be 2-D, got {X.shape}")
            self._dense = X
            self._features = None
        else:
            if features is None or pairs is None:
                raise ValidationError("streamed design needs features and pairs")
            self._dense = None
            self._features = np.asarray(features, dtype=np.float64)
        if self.targets.size != self.n_rows:
            raise DimensionError(f"{self.targets.size} targets for {self.n_rows} design rows")
        if self.n_rows == 0:
            raise EmptyDesignError("empty design: no regression rows remain")

    @property
    def n_rows(self) -> int:
        return self._dense.shape[0] if self._dense is not None else len(self.pairs)

    @property
    def n_cols(self) -> int:
        return self._dense.shape[1] if self._dense is not None else self._features.shape[1]

    shape = property(lambda self: (self.n_rows, self.n_cols))

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    @property
    def values(self) -> np.ndarray:
        if self._dense is None:
            F, p = self._features, self.pairs
            return F[p.i] * F[p.j]
        return self._dense

    def _blocks(self):
        if self._dense is not None:
            yield slice(0, self.n_rows), self._dense
            return
        F, p = self._features, self.pairs
        for start in range(0, self.n_rows, self.block_rows):
            sl = slice(start, min(start + self.block_rows, self.n_rows))
            yield sl, F[p.i[sl]] * F[p.j[sl]]

    def matvec(self, w) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ w
        out = np.empty(self.n_rows)
        for sl, block in self._blocks():
            out[sl] = block @ w
        return out

    def rmatvec(self, r) -> np.ndarray:
        if self._dense is not None:
            return self._dense.T @ r
        out = np.zeros(self.n_cols)
        for sl, block in self._blocks():
            out += block.T @ r[sl]
        return out

    def gram(self) -> np.ndarray:
        G = np.zeros((self.n_cols, self.n_cols))
        for _, block in self._blocks():
            G += block.T @ block
        return G

    def xty(self) -> np.ndarray:
        return self.rmatvec(self.targets)

    def take(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows)
        if self._dense is not None:
            pairs = self.pairs[rows] if self.pairs is not None else None
            return DesignMatrix(self._dense[rows], self.targets[rows], pairs=pairs,
                                block_rows=self.block_rows)
        return DesignMatrix(targets=self.targets[rows], features=self._features,
                            pairs=self.pairs[rows], block_rows=self.block_rows)

    def with_targets(self, targets) -> "DesignMatrix":
        if self._dense is not None:
            return DesignMatrix(self._dense, targets, pairs=self.pairs, block_rows=self.block_rows)
        return DesignMatrix(targets=targets, features=self._features, pairs=self.pairs,
                            block_rows=self.block_rows)

    def dense(self) -> "DesignMatrix":
        if self._dense is not None:
            return self
        return DesignMatrix(self.values, self.targets, pairs=self.pairs, block_rows=self.block_rows)


def observed_pair_mask(S: SimilarityMatrix, pairs: PairList) -> np.ndarray:
    return np.isfinite(S.values[pairs.i, pairs.j])


def build_design_matrix(
    F: FeatureMatrix,
    S: SimilarityMatrix,
    pairs: PairList | None = None,
    mask=None,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> DesignMatrix:
    """Hadamard-product design rows for ``pairs`` with targets from ``S``.

    Parameters
    ----------
    F, S : FeatureMatrix, SimilarityMatrix
        Must share item order.
    pairs : PairList, optional
        Defaults to the full lower triangle.
    mask : array of bool, optional
        Per-pair keep flags (length ``len(pairs)``) or an items x items
        boolean matrix.  Unmasked pairs must have defined targets.
    memory_budget : int
        Above this many bytes the rows are streamed in blocks instead of
        materialized.
    """
    if F.item_ids != S.item_ids:
        raise ValidationError("features and similarities do not share item order")
    if pairs is None:
        pairs = enumerate_pairs(F.n_items)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 2:
            mask = mask[pairs.i, pairs.j]
        if mask.shape != (len(pairs),):
            raise DimensionError(f"mask has shape {mask.shape}, expected ({len(pairs)},)")
        pairs = pairs[np.flatnonzero(mask)]
    if len(pairs) == 0:
        raise EmptyDesignError("empty design: the mask removes every pair")
    y = S.values[pairs.i, pairs.j]
    bad = ~np.isfinite(y)
    if np.any(bad):
        a, b = pairs[int(np.flatnonzero(bad)[0])]
        raise ValidationError(
            f"{int(bad.sum())} pair(s) lack a target similarity, e.g. "
            f"({S.item_ids[a]}, {S.item_ids[b]}); supply a mask to exclude missing pairs"
        )
    Fv = F.values
    if len(pairs) * F.n_features * 8 <= memory_budget:
        return DesignMatrix(Fv[pairs.i] * Fv[pairs.j], y, pairs=pairs)
    log.info("design of %d x %d exceeds memory budget; streaming rows", len(pairs), F.n_features)
    return DesignMatrix(targets=y, features=Fv, pairs=pairs)


# --------------------------------------------------------------------------
# Objective and solvers


@dataclass(frozen=True)
class RidgeConfig:
    """Solver settings.

    ``seed`` drives the coordinate order of the nonnegative solver; the
    unconstrained solvers are deterministic.
    """

    lam: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-6
    seed: int = 0
    nonnegative: bool = False
    method: str = "cg"

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValidationError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        if self.method not in ("cg", "gd"):
            raise ValidationError(f"unknown iterative method {self.method!r}")


@dataclass
class SolverResult:
    weights: WeightVector
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool = True
    history: list = field(default_factory=list)


def objective_and_gradient(X: DesignMatrix, w, lam: float):
    """Ridge objective ``||Xw - y||^2 + lam w'w`` and its gradient."""
    w = w.values if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if w.size != X.n_cols:
        raise DimensionError(f"weight vector has {w.size} entries, design has {X.n_cols} columns")
    r = X.matvec(w) - X.targets
    obj = float(r @ r + lam * (w @ w))
    grad = 2.0 * X.rmatvec(r) + 2.0 * lam * w
    return obj, grad


class RidgePath:
    """Closed-form ridge solutions for many penalties from one eigendecomposition.

    ``w(lam) = V diag(1 / (e + lam)) V' X'y`` where ``X'X = V diag(e) V'``.
    """

    def __init__(self, gram, xty, n_rows: int):
        gram = np.asarray(gram, dtype=np.float64)
        self.n_rows = n_rows
        self.n_cols = gram.shape[0]
        evals, evecs = np.linalg.eigh(gram)
        self.evals = np.clip(evals, 0.0, None)
        self.evecs = evecs
        self.proj = evecs.T @ np.asarray(xty, dtype=np.float64)
        top = self.evals[-1] if self.evals.size else 0.0
        self.thresh = top * max(n_rows, self.n_cols) * np.finfo(float).eps
        self.rank = int(np.sum(self.evals > self.thresh))

    @classmethod
    def from_design(cls, X: DesignMatrix) -> "RidgePath":
        return cls(X.gram(), X.xty(), X.n_rows)

    def solve(self, lam: float) -> np.ndarray:
        if lam < 0:
            raise ValidationError(f"lambda must be nonnegative, got {lam}")
        # A penalty below the rank threshold cannot regularize the null space.
        if lam <= self.thresh and self.rank < self.n_cols:
            raise SingularSystemError(
                f"design has rank {self.rank} < {self.n_cols} columns; the unregularized "
                "problem has no unique solution, use lambda > 0"
            )
        return self.evecs @ (self.proj / (self.evals + lam))


def ridge_closed_form(X: DesignMatrix, lam: float,
                      max_features: int = DEFAULT_MAX_DENSE_FEATURES) -> WeightVector:
    """Solve ``(X'X + lam I) w = X'y`` directly.

    Raises :class:`SingularSystemError` at ``lam == 0`` when ``X`` is rank
    deficient rather than returning a minimum-norm solution.
    """
    if X.n_cols > max_features:
        raise ValidationError(
            f"{X.n_cols} features exceed the dense normal-equation cap of {max_features}; "
            "use ridge_iterative or raise max_features"
        )
    return WeightVector(RidgePath.from_design(X).solve(lam))


def ridge_iterative(X: DesignMatrix, cfg: RidgeConfig | None = None) -> SolverResult:
    """Minimize the ridge objective iteratively until ``||grad|| <= tol``.

    ``method="cg"`` runs conjugate-gradient least squares (CGLS) on the
    regularized problem; ``method="gd"`` runs steepest descent with exact
    line search.  Both decrease the objective monotonically.
    """
    cfg = cfg or RidgeConfig()
    lam = cfg.lam
    y = X.targets
    w = np.zeros(X.n_cols)
    r = y.copy()
    s = X.rmatvec(r)
    p = s.copy()
    gamma = s @ s
    history = [float(r @ r)]
    converged = False
    n_iter = 0
    for n_iter in range(cfg.max_iter + 1):
        grad_norm = 2.0 * np.sqrt(gamma)
        if grad_norm <= cfg.tol:
            converged = True
            break
        if n_iter == cfg.max_iter:
            break
        direction = p if cfg.method == "cg" else s
        q = X.matvec(direction)
        delta = q @ q + lam * (direction @ direction)
        if delta <= 0:
            break
        alpha = (s @ direction) / delta
        w += alpha * direction
        if (n_iter + 1) % 50 == 0:
            r = y - X.matvec(w)
        else:
            r -= alpha * q
        s = X.rmatvec(r) - lam * w
        gamma_new = s @ s
        if cfg.method == "cg":
            p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        history.append(float(r @ r + lam * (w @ w)))
    obj, grad = objective_and_gradient(X, w, lam)
    gnorm = float(np.linalg.norm(grad))
    if not converged and gnorm > cfg.tol:
        raise ConvergenceError(
            f"iterative ridge did not reach gradient norm {cfg.tol:g} in {cfg.max_iter} "
            f"iterations (final {gnorm:.3g})",
            residual=gnorm,
            n_iter=n_iter,
        )
    return SolverResult(WeightVector(w), obj, gnorm, n_iter, True, history)


def kkt_residual(w, grad) -> float:
    """Largest violation of the nonnegativity optimality conditions."""
    free = w > 0
    viol = np.where(free, np.abs(grad), np.maximum(0.0, -grad))
    return float(viol.max()) if viol.size else 0.0


def ridge_nonneg(X: DesignMatrix, cfg: RidgeConfig | None = None) -> SolverResult:
    """Ridge with ``w >= 0`` by cyclic coordinate descent on the Gram matrix.

    After every sweep the unconstrained optimum over the current free set is
    tried; when feasible it replaces the iterate.  Stops once the KKT residual
    is at most ``cfg.tol``.
    """
    cfg = cfg or RidgeConfig(nonnegative=True)
    lam = cfg.lam
    G = X.gram()
    G[np.diag_indices_from(G)] += lam
    b = X.xty()
    yty = float(X.targets @ X.targets)
    d = b.size
    diag = np.diag(G).copy()
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(d)
    w = np.zeros(d)
    g = -b.copy()  # half gradient G w - b

    def objective(w):
        return float(w @ G @ w - 2 * b @ w + yty)

    history = [yty]
    for sweep in range(1, cfg.max_iter + 1):
        for k in order:
            if diag[k] <= 0:
                continue
            new = max(0.0, w[k] - g[k] / diag[k])
            step = new - w[k]
            if step != 0.0:
                g += step * G[:, k]
                w[k] = new
        free = np.flatnonzero(w > 0)
        if free.size:
            try:
                cand_free = np.linalg.solve(G[np.ix_(free, free)], b[free])
            except np.linalg.LinAlgError:
                cand_free = None
            if cand_free is not None and np.all(cand_free > 0):
                cand = np.zeros(d)
                cand[free] = cand_free
                if objective(cand) <= objective(w):
                    w = cand
                    g = G @ w - b
        history.append(objective(w))
        res = kkt_residual(w, 2.0 * g)
        if res <= cfg.tol:
            g = G @ w - b
            res = kkt_residual(w, 2.0 * g)
            if res <= cfg.tol:
                obj, grad = objective_and_gradient(X, w, lam)
                return SolverResult(WeightVector(w, nonnegative=True), obj,
                                    kkt_residual(w, grad), sweep, True, history)
    raise ConvergenceError(
        f"nonnegative ridge did not reach KKT residual {cfg.tol:g} in {cfg.max_iter} sweeps "
        f"(final {res:.3g})",
        residual=res,
        n_iter=cfg.max_iter,
    )


# --------------------------------------------------------------------------
# High-level fit with optional intercept / target centering


@dataclass
class RidgeFit:
    weights: WeightVector
    lam: float
    offset: float
    objective: float
    grad_norm: float
    n_iter: int
    solver: str
    fit_intercept: bool = False
    center_targets: bool = False

    def predict(self, X: DesignMatrix) -> np.ndarray:
        return X.matvec(self.weights.values) + self.offset

    def report(self) -> dict:
        return {
            "lambda": self.lam,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "n_iter": self.n_iter,
            "solver": self.solver,
            "offset": self.offset,
            "fit_intercept": self.fit_intercept,
            "center_targets": self.center_targets,
            "nonnegative": self.weights.nonnegative,
        }


def _prepare(X: DesignMatrix, fit_intercept: bool, center_targets: bool):
    if not (fit_intercept or center_targets):
        return X, None, 0.0
    y_mean = float(X.targets.mean())
    if fit_intercept:
        dense = X.values
        x_mean = dense.mean(axis=0)
        return DesignMatrix(dense - x_mean, X.targets - y_mean, pairs=X.pairs), x_mean, y_mean
    return X.with_targets(X.targets - y_mean), None, y_mean


def fit_ridge(
    X: DesignMatrix,
    lam: float,
    solver: str = "closed",
    nonnegative: bool = False,
    cfg: RidgeConfig | None = None,
    fit_intercept: bool = False,
    center_targets: bool = False,
    path: RidgePath | None = None,
) -> RidgeFit:
    """Fit weights at one penalty with the requested solver.

    ``nonnegative=True`` always uses :func:`ridge_nonneg`.  ``path`` lets the
    closed-form solver reuse a precomputed eigendecomposition.
    """
    Xw, x_mean, y_mean = _prepare(X, fit_intercept, center_targets)
    cfg = replace(cfg or RidgeConfig(), lam=lam, nonnegative=nonnegative)
    if nonnegative:
        res = ridge_nonneg(Xw, cfg)
        w, obj, gn, n_iter, used = res.weights, res.objective, res.grad_norm, res.n_iter, "nonneg-cd"
    elif solver == "iterative":
        res = ridge_iterative(Xw, cfg)
        w, obj, gn, n_iter, used = res.weights, res.objective, res.grad_norm, res.n_iter, f"iterative-{cfg.method}"
    elif solver == "closed":
        if path is None:
            path = RidgePath.from_design(Xw)
        w = WeightVector(path.solve(lam))
        obj, grad = objective_and_gradient(Xw, w, lam)
        gn, n_iter, used = float(np.linalg.norm(grad)), 0, "closed"
    else:
        raise ValidationError(f"unknown solver {solver!r}; expected 'closed' or 'iterative'")
    offset = y_mean - float(x_mean @ w.values) if x_mean is not None else y_mean
    return RidgeFit(w, lam, offset, obj, gn, n_iter, used, fit_intercept, center_targets)
