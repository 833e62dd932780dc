"""Cross-validation, penalty selection, permutation controls and domain transfer."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .alignment import (
    DesignMatrix,
    PairList,
    RidgeConfig,
    RidgePath,
    _prepare,
    build_design_matrix,
    enumerate_pairs,
    fit_ridge,
)
from .data import DomainDataset, FeatureMatrix, RatingRecord, SimilarityMatrix, aggregate_ratings
from .exceptions import DimensionError, FoldError, SimAlignError, ValidationError
from .similarity import WeightVector, pair_predictions

log = logging.getLogger(__name__)

METRICS = ("pearson2", "cod")
FOLD_MODES = ("pair", "image")
PERMUTATION_MODES = ("rows", "cols", "both")
DEFAULT_N_FOLDS = 6
DEFAULT_N_REPEATS = 10
MIN_SCORED_PAIRS = 3

_MODE_ALIASES = {
    "pair": "pair", "pair-level": "pair", "pairs": "pair",
    "image": "image", "image-disjoint": "image", "images": "image", "control": "image",
}
_PERM_ALIASES = {
    "rows": "rows", "cols": "cols", "cols-within-rows": "cols", "columns": "cols", "both": "both",
}


def _fold_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ValidationError(f"unknown fold mode {mode!r}; expected 'pair' or 'image'")


def default_lambda_grid() -> list[float]:
    """Half-decade sweep over 1..1e5 with the 2000-9000 band filled in."""
    coarse = np.logspace(0, 5, 11)
    band = np.arange(2000.0, 9001.0, 1000.0)
    return sorted(set(float(x) for x in np.concatenate([coarse, band])))


# --------------------------------------------------------------------------
# Scores


def r_squared(predicted, observed, mode: str = "pearson2") -> float:
    """Variance explained: squared Pearson correlation or coefficient of determination.

    ``pearson2`` is invariant to affine rescaling of the predictions;
    ``cod = 1 - SSE/SST`` is not and may be negative.
    """
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    o = np.asarray(observed, dtype=np.float64).reshape(-1)
    if p.shape != o.shape:
        raise DimensionError(f"predicted has {p.size} entries, observed has {o.size}")
    if p.size < 3:
        raise ValidationError(f"need at least 3 values to score, got {p.size}")
    oc = o - o.mean()
    sst = float(oc @ oc)
    if sst <= 1e-300 or np.ptp(o) == 0:
        raise ValidationError("observed values are constant; variance explained is undefined")
    if mode == "pearson2":
        pc = p - p.mean()
        spp = float(pc @ pc)
        if spp <= 0 or np.ptp(p) == 0:
            return 0.0
        r = float(pc @ oc) / np.sqrt(spp * sst)
        return float(min(1.0, max(0.0, r * r)))
    if mode == "cod":
        resid = o - p
        return 1.0 - float(resid @ resid) / sst
    raise ValidationError(f"unknown score mode {mode!r}; expected one of {METRICS}")


# --------------------------------------------------------------------------
# Folds


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Test-fold index per pair (``-1`` = never tested) plus how to train.

    In ``pair`` mode a fold trains on every other pair.  In ``image`` mode
    fold ``f`` tests pairs within ``groups[f]`` and trains only on pairs that
    touch none of those images; straddling pairs are left out of both.
    """

    n_folds: int
    assignment: np.ndarray
    mode: str
    seed: int
    pairs: PairList
    groups: tuple | None = None

    def split(self, f: int):
        test = np.flatnonzero(self.assignment == f)
        if self.mode == "pair":
            train = np.flatnonzero(self.assignment != f)
        else:
            train = np.flatnonzero(~self.pairs.involves(self.groups[f]))
        return train, test

    def splits(self):
        return [self.split(f) for f in range(self.n_folds)]

    def test_counts(self) -> list[int]:
        return [int(np.sum(self.assignment == f)) for f in range(self.n_folds)]


def _deal(n_rows: int, n_folds: int, rng) -> np.ndarray:
    if n_rows < n_folds:
        raise FoldError(f"{n_rows} pairs cannot fill {n_folds} folds with test pairs")
    assignment = np.empty(n_rows, dtype=np.intp)
    assignment[rng.permutation(n_rows)] = np.arange(n_rows) % n_folds
    assignment.setflags(write=False)
    return assignment


def make_folds(pairs: PairList, n_items: int, n_folds: int = DEFAULT_N_FOLDS,
               mode: str = "pair", seed: int = 0) -> FoldAssignment:
    """Seeded fold assignment over ``pairs``.

    ``pair`` mode shuffles the pairs and deals them round-robin.  ``image``
    mode shuffles the items and deals them into ``n_folds`` groups; a group
    left with a single item borrows the first item of the next group so that
    it still owns a test pair.
    """
    mode = _fold_mode(mode)
    if n_folds < 2:
        raise FoldError(f"need at least 2 folds, got {n_folds}")
    rng = np.random.default_rng(seed)
    n_pairs = len(pairs)
    assignment = np.full(n_pairs, -1, dtype=np.intp)
    if mode == "pair":
        assignment = _deal(n_pairs, n_folds, rng)
        return FoldAssignment(n_folds, assignment, mode, seed, pairs)

    if n_items < n_folds:
        raise FoldError(f"{n_items} items cannot be split into {n_folds} image groups")
    order = rng.permutation(n_items)
    base = [order[f::n_folds] for f in range(n_folds)]
    groups = []
    for f, g in enumerate(base):
        if g.size < 2:
            g = np.append(g, base[(f + 1) % n_folds][0])
        groups.append(np.sort(g))
    for f, g in enumerate(groups):
        inside = pairs.within(g) & (assignment < 0)
        assignment[inside] = f
    counts = [int(np.sum(assignment == f)) for f in range(n_folds)]
    empty = [f for f, c in enumerate(counts) if c == 0]
    if empty:
        raise FoldError(f"image-disjoint fold(s) {empty} have zero test pairs")
    assignment.setflags(write=False)
    return FoldAssignment(n_folds, assignment, mode, seed, pairs, tuple(groups))


def assert_image_disjoint(folds: FoldAssignment) -> None:
    """Raise if any fold shares an image between its training and test pairs."""
    p = folds.pairs
    for f in range(folds.n_folds):
        train, test = folds.split(f)
        test_items = set(p.i[test].tolist()) | set(p.j[test].tolist())
        train_items = set(p.i[train].tolist()) | set(p.j[train].tolist())
        shared = test_items & train_items
        if shared:
            raise FoldError(f"fold {f} shares image(s) {sorted(shared)[:5]} between train and test")


# --------------------------------------------------------------------------
# Cross-validated fitting


@dataclass
class EvaluationReport:
    """Scores of one cross-validated fit.

    ``r2_raw`` scores unit weights, ``r2_transformed`` the mean held-out
    score at ``lambda_star``; both use ``metric``.
    """

    r2_raw: float
    r2_transformed: float
    lambda_star: float
    per_fold_scores: list
    metric: str
    fold_mode: str
    n_folds: int
    seed: int
    pearson2_heldout: float
    cod_heldout: float
    pooled_heldout: float
    r2_train: float
    grid: list
    grid_scores: list
    n_pairs: int
    n_features: int
    solver: str = "closed"
    nonnegative: bool = False
    fit_intercept: bool = False
    center_targets: bool = False
    fit: dict = field(default_factory=dict)
    per_domain: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class FitResult(NamedTuple):
    weights: WeightVector
    report: EvaluationReport


@dataclass
class _GridCell:
    primary: np.ndarray  # (n_folds,)
    secondary: np.ndarray
    oof: np.ndarray  # held-out predictions per design row, NaN if never tested


def _evaluate_grid(X, splits, grid, metric, solver, nonnegative, cfg, fit_intercept,
                   center_targets, cache):
    other = "cod" if metric == "pearson2" else "pearson2"
    todo = [lam for lam in grid if lam not in cache]
    if not todo:
        return
    cells = {lam: _GridCell(np.empty(len(splits)), np.empty(len(splits)), np.full(X.n_rows, np.nan))
             for lam in todo}
    for f, (train, test) in enumerate(splits):
        if test.size == 0:
            raise FoldError(f"fold {f} has no test pairs")
        scored = test.size >= MIN_SCORED_PAIRS
        if not scored:
            log.warning("fold %d has %d test pair(s); it is fit but left out of the mean score",
                        f, test.size)
        Xtr, Xte = X.take(train), X.take(test)
        path = None
        if solver == "closed" and not nonnegative:
            prepared, _, _ = _prepare(Xtr, fit_intercept, center_targets)
            path = RidgePath.from_design(prepared)
        for lam in todo:
            try:
                fit = fit_ridge(Xtr, lam, solver=solver, nonnegative=nonnegative, cfg=cfg,
                                fit_intercept=fit_intercept, center_targets=center_targets,
                                path=path)
                pred = fit.predict(Xte)
                if scored:
                    cells[lam].primary[f] = r_squared(pred, Xte.targets, metric)
                    cells[lam].secondary[f] = r_squared(pred, Xte.targets, other)
                else:
                    cells[lam].primary[f] = cells[lam].secondary[f] = np.nan
            except SimAlignError as exc:
                raise type(exc)(f"fit failed at lambda={lam:g}, fold={f}: {exc}") from exc
            cells[lam].oof[test] = pred
    if todo and np.all(np.isnan(cells[todo[0]].primary)):
        raise FoldError(f"no fold has the {MIN_SCORED_PAIRS} test pairs needed for a score")
    cache.update(cells)


def _fold_mean(scores) -> float:
    return float(np.nanmean(scores))


def _refined(grid, scores):
    k = int(np.argmax(scores))
    lo = grid[k - 1] if k > 0 else grid[k] / 2.0
    hi = grid[k + 1] if k + 1 < len(grid) else grid[k] * 2.0
    return [float(x) for x in np.linspace(lo, hi, 9)[1:-1]]


def cross_validate_design(
    X: DesignMatrix,
    splits,
    lambda_grid=None,
    metric: str = "pearson2",
    refine: bool | None = None,
    solver: str = "closed",
    nonnegative: bool = False,
    cfg: RidgeConfig | None = None,
    fit_intercept: bool = False,
    center_targets: bool = False,
):
    """Grid search over penalties; returns (final fit, lambda*, cache, grid).

    The chosen penalty maximizes the mean held-out ``metric`` score; ties go
    to the smaller penalty.  The final fit uses every row of ``X``.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if refine is None:
        refine = lambda_grid is None
    grid = default_lambda_grid() if lambda_grid is None else sorted(set(float(x) for x in lambda_grid))
    if not grid:
        raise ValidationError("lambda grid is empty")
    if any(lam < 0 for lam in grid):
        raise ValidationError("lambda grid contains negative values")
    cache: dict[float, _GridCell] = {}
    args = (metric, solver, nonnegative, cfg, fit_intercept, center_targets)
    _evaluate_grid(X, splits, grid, *args, cache)
    if refine and len(grid) > 1:
        means = [_fold_mean(cache[lam].primary) for lam in grid]
        extra = [lam for lam in _refined(grid, means) if lam > 0]
        _evaluate_grid(X, splits, extra, *args, cache)
        grid = sorted(set(grid) | set(extra))
    means = np.array([_fold_mean(cache[lam].primary) for lam in grid])
    best = int(np.argmax(means))
    lam_star = grid[best]
    final = fit_ridge(X, lam_star, solver=solver, nonnegative=nonnegative, cfg=cfg,
                      fit_intercept=fit_intercept, center_targets=center_targets)
    return final, lam_star, cache, grid


def _assemble_report(X, final, lam_star, cache, grid, metric, fold_mode, n_folds, seed,
                     solver, nonnegative, fit_intercept, center_targets):
    cell = cache[lam_star]
    tested = np.isfinite(cell.oof)
    return EvaluationReport(
        r2_raw=r_squared(X.matvec(np.ones(X.n_cols)), X.targets, metric),
        r2_transformed=_fold_mean(cell.primary),
        lambda_star=lam_star,
        per_fold_scores=[float(s) for s in cell.primary],
        metric=metric,
        fold_mode=fold_mode,
        n_folds=n_folds,
        seed=seed,
        pearson2_heldout=_fold_mean(cell.primary if metric == "pearson2" else cell.secondary),
        cod_heldout=_fold_mean(cell.primary if metric == "cod" else cell.secondary),
        pooled_heldout=r_squared(cell.oof[tested], X.targets[tested], metric),
        r2_train=r_squared(final.predict(X), X.targets, metric),
        grid=list(grid),
        grid_scores=[float(_fold_mean(cache[lam].primary)) for lam in grid],
        n_pairs=X.n_rows,
        n_features=X.n_cols,
        solver=final.solver,
        nonnegative=nonnegative,
        fit_intercept=fit_intercept,
        center_targets=center_targets,
        fit=final.report(),
    )


def _weights_with_meta(final, lam_star):
    return WeightVector(final.weights.values, nonnegative=final.weights.nonnegative,
                        meta={"lambda": lam_star, "offset": final.offset})


def cv_fit(
    F: FeatureMatrix,
    S: SimilarityMatrix,
    lambda_grid=None,
    folds: FoldAssignment | None = None,
    *,
    n_folds: int = DEFAULT_N_FOLDS,
    fold_mode: str = "pair",
    seed: int = 0,
    metric: str = "pearson2",
    mask=None,
    refine: bool | None = None,
    solver: str = "closed",
    nonnegative: bool = False,
    cfg: RidgeConfig | None = None,
    fit_intercept: bool = False,
    center_targets: bool = False,
) -> FitResult:
    """Cross-validated weight fit for one domain.

    Parameters
    ----------
    F, S : FeatureMatrix, SimilarityMatrix
    lambda_grid : sequence of float, optional
        Penalties to try.  The default grid is refined linearly around its
        winner; explicit grids are used as given unless ``refine=True``.
    folds : FoldAssignment, optional
        Built from ``n_folds``, ``fold_mode`` and ``seed`` when omitted.
    metric : {"pearson2", "cod"}
        Score maximized during selection.  Both are reported.
    mask : bool array, optional
        Pairs to keep; required when ``S`` has missing pairs.

    Returns
    -------
    FitResult
        Weights refit on all retained pairs at the selected penalty, and the
        :class:`EvaluationReport`.
    """
    X = build_design_matrix(F, S, mask=mask)
    if folds is None:
        folds = make_folds(X.pairs, F.n_items, n_folds, fold_mode, seed)
    elif len(folds.pairs) != X.n_rows:
        raise DimensionError(f"folds cover {len(folds.pairs)} pairs, design has {X.n_rows}")
    final, lam_star, cache, grid = cross_validate_design(
        X, folds.splits(), lambda_grid, metric, refine, solver, nonnegative, cfg,
        fit_intercept, center_targets,
    )
    report = _assemble_report(X, final, lam_star, cache, grid, metric, folds.mode, folds.n_folds,
                              folds.seed, solver, nonnegative, fit_intercept, center_targets)
    return FitResult(_weights_with_meta(final, lam_star), report)


# --------------------------------------------------------------------------
# Permutation controls


def permute_design(X: np.ndarray, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Shuffle design rows, the columns within each row, or both."""
    mode = _PERM_ALIASES.get(mode, mode)
    if mode not in PERMUTATION_MODES:
        raise ValidationError(f"unknown permutation mode {mode!r}; expected {PERMUTATION_MODES}")
    out = np.array(X, copy=True)
    if mode in ("rows", "both"):
        out = out[rng.permutation(out.shape[0])]
    if mode in ("cols", "both"):
        out = rng.permuted(out, axis=1)
    return out


def permutation_baseline(
    F: FeatureMatrix,
    S: SimilarityMatrix,
    mode: str = "rows",
    n_repeats: int = DEFAULT_N_REPEATS,
    seed: int = 0,
    *,
    lambda_grid=None,
    n_folds: int = DEFAULT_N_FOLDS,
    fold_mode: str = "pair",
    metric: str = "pearson2",
    mask=None,
    identity: bool = False,
    **fit_kwargs,
) -> list[float]:
    """Held-out scores after shuffling the design matrix; targets keep their order.

    ``identity=True`` skips the shuffle, reproducing the unshuffled
    :func:`cv_fit` score.  Folds are identical across repeats.
    """
    X = build_design_matrix(F, S, mask=mask).dense()
    folds = make_folds(X.pairs, F.n_items, n_folds, fold_mode, seed)
    splits = folds.splits()
    children = np.random.SeedSequence(seed).spawn(n_repeats)
    scores = []
    for rep, child in enumerate(children):
        values = X.values if identity else permute_design(X.values, mode, np.random.default_rng(child))
        Xp = DesignMatrix(values, X.targets, pairs=X.pairs)
        _, lam_star, cache, _ = cross_validate_design(Xp, splits, lambda_grid, metric, **fit_kwargs)
        scores.append(_fold_mean(cache[lam_star].primary))
        log.debug("baseline %s repeat %d: lambda*=%g score=%.4g", mode, rep, lam_star, scores[-1])
    return scores


# --------------------------------------------------------------------------
# Transfer between domains


def transfer_evaluate(w: WeightVector, target: DomainDataset, metric: str = "pearson2",
                      mask=None) -> float:
    """Score weights learned elsewhere on ``target``'s observed lower triangle."""
    wv = w.values if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if wv.size != target.features.n_features:
        raise DimensionError(
            f"weights have {wv.size} entries, {target.name!r} has {target.features.n_features} features"
        )
    pairs = enumerate_pairs(target.n_items)
    keep = np.isfinite(target.similarities.values[pairs.i, pairs.j])
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        keep &= mask[pairs.i, pairs.j] if mask.ndim == 2 else mask
    pairs = pairs[np.flatnonzero(keep)]
    pred = pair_predictions(target.features, wv, pairs)
    return r_squared(pred, target.similarities.values[pairs.i, pairs.j], metric)


def raw_r_squared(dataset: DomainDataset, metric: str = "pearson2") -> float:
    return transfer_evaluate(WeightVector.ones(dataset.features.n_features), dataset, metric)


# --------------------------------------------------------------------------
# Joint multi-domain fitting


def _stack(datasets: Sequence[DomainDataset]):
    if not datasets:
        raise ValidationError("no datasets given")
    dims = {d.features.n_features for d in datasets}
    if len(dims) != 1:
        raise DimensionError(
            "datasets disagree on feature dimension: "
            + ", ".join(f"{d.name}={d.features.n_features}" for d in datasets)
        )
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate dataset names in {names}")
    designs = []
    for d in datasets:
        S = d.similarities
        pairs = enumerate_pairs(d.n_items)
        mask = None if S.is_complete else np.isfinite(S.values[pairs.i, pairs.j])
        designs.append(build_design_matrix(d.features, S, pairs, mask).dense())
    return designs


def _stacked_splits(designs, datasets, n_folds, fold_mode, seed):
    offsets = np.cumsum([0] + [X.n_rows for X in designs])
    total = int(offsets[-1])
    if fold_mode == "pair":
        # Deal all stacked rows at once; one dataset reduces to make_folds.
        assignment = _deal(total, n_folds, np.random.default_rng(seed))
        return [(np.flatnonzero(assignment != f), np.flatnonzero(assignment == f))
                for f in range(n_folds)]
    per = [make_folds(X.pairs, d.n_items, n_folds, "image", seed + k).splits()
           for k, (X, d) in enumerate(zip(designs, datasets))]
    splits = []
    for f in range(n_folds):
        train = np.concatenate([per[k][f][0] + offsets[k] for k in range(len(designs))])
        test = np.concatenate([per[k][f][1] + offsets[k] for k in range(len(designs))])
        splits.append((train, test))
    return splits


def joint_fit(
    datasets: Sequence[DomainDataset],
    lambda_grid=None,
    *,
    n_folds: int = DEFAULT_N_FOLDS,
    fold_mode: str = "pair",
    seed: int = 0,
    metric: str = "pearson2",
    refine: bool | None = None,
    solver: str = "closed",
    nonnegative: bool = False,
    cfg: RidgeConfig | None = None,
    fit_intercept: bool = False,
    center_targets: bool = False,
) -> FitResult:
    """One shared weight vector fit on within-domain pairs of every dataset.

    No cross-domain pairs enter the design.  The report carries pooled and
    per-domain held-out scores.
    """
    fold_mode = _fold_mode(fold_mode)
    designs = _stack(datasets)
    X = DesignMatrix(np.vstack([D.values for D in designs]),
                     np.concatenate([D.targets for D in designs]))
    splits = _stacked_splits(designs, datasets, n_folds, fold_mode, seed)
    final, lam_star, cache, grid = cross_validate_design(
        X, splits, lambda_grid, metric, refine, solver, nonnegative, cfg,
        fit_intercept, center_targets,
    )
    report = _assemble_report(X, final, lam_star, cache, grid, metric, fold_mode, n_folds, seed,
                              solver, nonnegative, fit_intercept, center_targets)
    offsets = np.cumsum([0] + [D.n_rows for D in designs])
    oof = cache[lam_star].oof
    per_domain = {}
    for k, d in enumerate(datasets):
        sl = slice(offsets[k], offsets[k + 1])
        rows_pred, rows_obs = oof[sl], X.targets[sl]
        tested = np.isfinite(rows_pred)
        per_domain[d.name] = {
            "n_pairs": int(offsets[k + 1] - offsets[k]),
            "heldout": r_squared(rows_pred[tested], rows_obs[tested], metric),
            "raw": r_squared(designs[k].matvec(np.ones(X.n_cols)), designs[k].targets, metric),
        }
    report.per_domain = per_domain
    return FitResult(_weights_with_meta(final, lam_star), report)


def leave_one_domain_out(datasets: Sequence[DomainDataset], held_out_name: str,
                         lambda_grid=None, **kwargs) -> float:
    """Fit jointly on every domain except ``held_out_name``; score on it."""
    names = [d.name for d in datasets]
    if len(datasets) < 2:
        raise ValidationError("leave-one-domain-out needs at least 2 datasets")
    if held_out_name not in names:
        raise ValidationError(f"held-out domain {held_out_name!r} not among {names}")
    rest = [d for d in datasets if d.name != held_out_name]
    target = datasets[names.index(held_out_name)]
    weights, _ = joint_fit(rest, lambda_grid, **kwargs)
    return transfer_evaluate(weights, target, kwargs.get("metric", "pearson2"))


def lodo_table(datasets, lambda_grid=None, **kwargs) -> list[dict]:
    return [
        {"leave_out": d.name, "r2": leave_one_domain_out(datasets, d.name, lambda_grid, **kwargs)}
        for d in datasets
    ]


def transfer_table(datasets, lambda_grid=None, fits: dict | None = None, **kwargs) -> list[dict]:
    """Score every domain's cross-validated weights on every other domain."""
    if fits is None:
        fits = {d.name: cv_fit(d.features, d.similarities, lambda_grid, **kwargs) for d in datasets}
    metric = kwargs.get("metric", "pearson2")
    rows = []
    for train in datasets:
        w = fits[train.name].weights
        for test in datasets:
            if test.name != train.name:
                rows.append({"training_set": train.name, "test_set": test.name,
                             "r2": transfer_evaluate(w, test, metric)})
    return rows


# --------------------------------------------------------------------------
# Rater reliability


def split_half_reliability(records: Sequence[RatingRecord], item_ids, seed: int = 0,
                           metric: str = "pearson2") -> float:
    """Seeded split of raters into halves; agreement of the two averaged matrices.

    Scored over pairs rated in both halves.
    """
    raters = sorted({r.rater_id for r in records})
    if len(raters) < 2:
        raise ValidationError("split-half reliability needs at least 2 distinct raters")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(raters))
    half = {raters[k] for k in perm[: len(raters) // 2]}
    a = aggregate_ratings([r for r in records if r.rater_id in half], item_ids)
    b = aggregate_ratings([r for r in records if r.rater_id not in half], item_ids)
    i, j = np.tril_indices(len(item_ids), -1)
    va, vb = a.values[i, j], b.values[i, j]
    both = np.isfinite(va) & np.isfinite(vb)
    return r_squared(va[both], vb[both], metric)


def table1_rows(datasets, lambda_grid=None, ratings: dict | None = None, seed: int = 0,
                **kwargs) -> list[dict]:
    """Raw, pair-level transformed and image-disjoint control scores per domain."""
    rows = []
    for d in datasets:
        fit = cv_fit(d.features, d.similarities, lambda_grid, fold_mode="pair", seed=seed, **kwargs)
        control = cv_fit(d.features, d.similarities, lambda_grid, fold_mode="image", seed=seed,
                         **kwargs)
        row = {
            "dataset": d.name,
            "raw_r2": fit.report.r2_raw,
            "transformed_r2": fit.report.r2_transformed,
            "cv_control_r2": control.report.r2_transformed,
            "lambda_star": fit.report.lambda_star,
        }
        if ratings and d.name in ratings:
            row["human_split_half_r2"] = split_half_reliability(ratings[d.name], d.features.item_ids,
                                                                seed)
        rows.append(row)
    return rows
