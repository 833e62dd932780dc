"""Command-line entry point.

Every subcommand reads the same JSON configuration (``--config``), may
override a few keys with flags, and writes its artifacts into
``output_dir``.  Each artifact carries the configuration hash and seed, so
it can be traced back to the run that produced it.  Reruns with the same
configuration produce byte-identical files.

Exit status is 0 on success, 2 for an invalid configuration and 1 for a
runtime failure; failures also write ``error.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import RidgeConfig, build_design_matrix, fit_ridge
from .categories import DEFAULT_KS, SPACES, build_categories, save_partition, write_manifest
from .data import (
    DomainDataset,
    SimilarityMatrix,
    aggregate_ratings,
    format_float,
    load_features,
    load_ratings,
    load_similarities,
    save_features,
    save_similarities,
    zscore_normalize,
)
from .evaluation import (
    FOLD_MODES,
    FitResult,
    METRICS,
    PERMUTATION_MODES,
    cv_fit,
    joint_fit,
    lodo_table,
    permutation_baseline,
    split_half_reliability,
    transfer_table,
)
from .exceptions import ParseError, SimAlignError
from .reports import TABLE_KINDS, table_report
from .similarity import WeightVector, inner_product_similarity, load_weights, save_weights, weighted_similarity
from .structure import hca_centroid, nonmetric_mds, sim_to_dist
from .synth import SynthSpec, generate

log = logging.getLogger("simalign")

COMMANDS = ("ingest", "fit", "evaluate", "baseline", "transfer", "joint-fit", "lodo",
            "embed", "dendrogram", "cluster", "synth", "report")
ENV_VERBOSITY = "SIMALIGN_VERBOSITY"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

_DEFAULTS = {
    "lambda_grid": None,
    "n_folds": 6,
    "seed": 0,
    "output_dir": "out",
    "metric": "pearson2",
    "fold_mode": "pair",
    "solver": "closed",
    "nonnegative": False,
    "refine": None,
    "fit_intercept": False,
    "center_targets": False,
    "strict": False,
    "precision": 4,
}
_KNOWN = set(_DEFAULTS) | {
    "command", "datasets",
    "zscore", "ddof", "scale",                      # ingest
    "lambda",                                       # fit
    "table1",                                       # evaluate
    "modes", "n_repeats",                           # baseline
    "dim", "n_init", "max_iter", "tol", "space", "distance", "linkage",  # embed, dendrogram
    "ks", "spaces", "n_restarts",                   # cluster
    "synth",                                        # synth
    "kind", "input",                                # report
}
_DATASET_KEYS = {"features", "similarities", "ratings", "weights"}
_PATH_KEYS = ("features", "similarities", "ratings", "weights")
_SIM_SPACES = ("empirical", "raw", "transformed")


class ConfigError(SimAlignError):
    """The configuration is malformed or references missing files."""


@dataclass
class RunConfig:
    command: str
    values: dict
    base_dir: Path
    output_dir: Path
    datasets: dict = field(default_factory=dict)  # name -> {key: absolute Path}

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def config_hash(self) -> str:
        body = {k: v for k, v in self.values.items() if k != "output_dir"}
        body["command"] = self.command
        return hashlib.sha256(_canonical_json(body).encode()).hexdigest()

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed, "version": __version__}

    def comments(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}

    def fit_kwargs(self) -> dict:
        return {
            "metric": self["metric"],
            "refine": self.values["refine"],
            "solver": self["solver"],
            "nonnegative": bool(self["nonnegative"]),
            "fit_intercept": bool(self["fit_intercept"]),
            "center_targets": bool(self["center_targets"]),
        }

    def cv_kwargs(self) -> dict:
        return {"n_folds": int(self["n_folds"]), "fold_mode": self["fold_mode"], "seed": self.seed,
                **self.fit_kwargs()}


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# Configuration


def _check_choice(values, key, choices):
    if values.get(key) is not None and values[key] not in choices:
        raise ConfigError(f"{key} must be one of {list(choices)}, got {values[key]!r}")


def _validate(values: dict, command: str):
    unknown = sorted(set(values) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    _check_choice(values, "metric", METRICS)
    _check_choice(values, "fold_mode", FOLD_MODES + ("pair-level", "image-disjoint"))
    _check_choice(values, "solver", ("closed", "iterative"))
    _check_choice(values, "space", _SIM_SPACES)
    _check_choice(values, "distance", ("max-shift", "self-sim"))
    _check_choice(values, "linkage", ("centroid",))
    _check_choice(values, "kind", TABLE_KINDS)
    if not isinstance(values["seed"], int) or isinstance(values["seed"], bool):
        raise ConfigError(f"seed must be an integer, got {values['seed']!r}")
    if not isinstance(values["n_folds"], int) or values["n_folds"] < 2:
        raise ConfigError(f"n_folds must be an integer >= 2, got {values['n_folds']!r}")
    grid = values.get("lambda_grid")
    if grid is not None:
        if not isinstance(grid, list) or not grid or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0 for x in grid
        ):
            raise ConfigError("lambda_grid must be a non-empty list of nonnegative numbers")
    for key in ("modes",):
        for m in values.get(key) or []:
            if m not in PERMUTATION_MODES + ("cols-within-rows",):
                raise ConfigError(f"unknown permutation mode {m!r}")
    for s in values.get("spaces") or []:
        if s not in SPACES:
            raise ConfigError(f"cluster spaces must be among {list(SPACES)}, got {s!r}")
    for key in ("dim", "n_init", "max_iter", "n_repeats", "n_restarts"):
        v = values.get(key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            raise ConfigError(f"{key} must be a positive integer, got {v!r}")
    ks = values.get("ks")
    if ks is not None and (not isinstance(ks, list) or not all(isinstance(k, int) and k >= 2 for k in ks)):
        raise ConfigError("ks must be a list of integers >= 2")
    if command == "synth":
        try:
            SynthSpec(**{**(values.get("synth") or {}), "seed": values["seed"]})
        except TypeError as exc:
            raise ConfigError(f"invalid synth settings: {exc}") from None
        except SimAlignError as exc:
            raise ConfigError(f"invalid synth settings: {exc}") from None
    if command == "report" and not values.get("input"):
        raise ConfigError("report needs an 'input' results file")
    if command == "report" and not values.get("kind"):
        raise ConfigError("report needs a table 'kind'")


def _resolve_datasets(values, base_dir, command) -> dict:
    raw = values.get("datasets")
    if command in ("synth", "report"):
        return {}
    if not raw or not isinstance(raw, dict):
        raise ConfigError("configuration needs a non-empty 'datasets' mapping")
    out = {}
    for name, entry in raw.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"dataset {name!r} must map to an object of file paths")
        unknown = sorted(set(entry) - _DATASET_KEYS)
        if unknown:
            raise ConfigError(f"dataset {name!r} has unknown keys {unknown}")
        if "features" not in entry:
            raise ConfigError(f"dataset {name!r} has no 'features' file")
        if "similarities" not in entry and not (command == "ingest" and "ratings" in entry):
            raise ConfigError(f"dataset {name!r} has no 'similarities' file")
        paths = {}
        for key in _PATH_KEYS:
            if key in entry:
                p = (base_dir / entry[key]).resolve()
                if not p.is_file():
                    raise ConfigError(f"dataset {name!r}: {key} file {entry[key]!r} does not exist")
                paths[key] = p
        out[name] = paths
    return out


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "output_dir", "n_folds", "metric", "fold_mode", "solver", "dim", "n_init",
                "max_iter", "linkage", "kind", "input", "n_repeats", "space"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    if getattr(args, "lambda_grid", None):
        try:
            out["lambda_grid"] = [float(x) for x in args.lambda_grid.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse --lambda-grid {args.lambda_grid!r}") from None
    if getattr(args, "lam", None) is not None:
        out["lambda"] = args.lam
    if getattr(args, "table1", False):
        out["table1"] = True
    if getattr(args, "strict", False):
        out["strict"] = True
    if getattr(args, "nonnegative", False):
        out["nonnegative"] = True
    return out


def load_config(args) -> RunConfig:
    """Merge the config file, flag overrides and defaults, then validate."""
    values = {}
    base_dir = Path.cwd()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {args.config!r} does not exist")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config must be a JSON object")
        base_dir = path.resolve().parent
    declared = values.get("command")
    if declared is not None and declared != args.command:
        raise ConfigError(f"config is for command {declared!r}, not {args.command!r}")
    values = {**_DEFAULTS, **values, **_overrides(args)}
    values.pop("command", None)
    values.pop("provenance", None)  # configs written by earlier runs carry their own
    _validate(values, args.command)
    out = Path(values["output_dir"])
    if not out.is_absolute():
        out = (base_dir / out) if args.config and getattr(args, "output_dir", None) is None else out.resolve()
    return RunConfig(args.command, values, base_dir, out.resolve(),
                     _resolve_datasets(values, base_dir, args.command))


# --------------------------------------------------------------------------
# Output helpers


class Artifacts:
    """Writes run outputs and tracks them by path relative to the output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = cfg.output_dir
        self.root.mkdir(parents=True, exist_ok=True)
        self.paths: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        rel = p.relative_to(self.root).as_posix()
        if rel not in self.paths:
            self.paths.append(rel)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        p.write_text(content, encoding="utf-8")
        return p

    def json(self, name: str, doc: dict) -> Path:
        body = {"provenance": self.cfg.provenance(), "command": self.cfg.command, **doc}
        return self.text(name, json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")

    def table(self, stem: str, rows, kind: str) -> None:
        t = table_report(rows, kind, strict=bool(self.cfg["strict"]),
                         precision=int(self.cfg["precision"]))
        self.text(f"{stem}.csv", t.to_csv(self.cfg.comments()))
        self.text(f"{stem}.md", t.to_markdown(self.cfg.comments()))
        return t

    def report(self, doc: dict) -> Path:
        name = f"{self.cfg.command.replace('-', '_')}_report.json"
        self.path(name)
        doc = {**doc, "artifacts": sorted(p for p in self.paths if p != name)}
        return self.json(name, doc)


def _input_hashes(cfg: RunConfig) -> dict:
    out = {}
    for name, paths in cfg.datasets.items():
        out[name] = {key: {"path": _relative(p, cfg.base_dir), "sha256": sha256_file(p)}
                     for key, p in sorted(paths.items())}
    return out


def _relative(p: Path, base: Path) -> str:
    try:
        return p.relative_to(base).as_posix()
    except ValueError:
        return os.path.relpath(p, base).replace(os.sep, "/")


def _load(cfg: RunConfig, zscore: bool = False) -> list[DomainDataset]:
    datasets = []
    for name, paths in cfg.datasets.items():
        F = load_features(paths["features"])
        if zscore:
            F = zscore_normalize(F)
        S = load_similarities(paths["similarities"])
        datasets.append(DomainDataset(name, F, S))
        log.info("loaded %s: %d items, %d features", name, F.n_items, F.n_features)
    return datasets


def _mask(S: SimilarityMatrix):
    return None if S.is_complete else np.isfinite(S.values)


def _weights_for(cfg: RunConfig, d: DomainDataset) -> WeightVector:
    path = cfg.datasets[d.name].get("weights")
    if path is not None:
        return load_weights(path)
    log.info("no weights file for %s; fitting by cross-validation", d.name)
    return cv_fit(d.features, d.similarities, cfg.values["lambda_grid"], mask=_mask(d.similarities),
                  **cfg.cv_kwargs()).weights


def _similarity_in(cfg: RunConfig, d: DomainDataset, space: str) -> SimilarityMatrix:
    if space == "empirical":
        return d.similarities
    if space == "raw":
        return inner_product_similarity(d.features)
    return weighted_similarity(d.features, _weights_for(cfg, d))


# --------------------------------------------------------------------------
# Commands


def cmd_ingest(cfg: RunConfig, out: Artifacts) -> dict:
    zscore = cfg.get("zscore", True)
    ddof = int(cfg.get("ddof", 0))
    scale = tuple(cfg.get("scale", (0.0, 10.0)))
    summary = {}
    for name, paths in cfg.datasets.items():
        F = load_features(paths["features"])
        if zscore:
            F = zscore_normalize(F, ddof=ddof)
        entry = {"n_items": F.n_items, "n_features": F.n_features,
                 "zero_variance_features": int(np.sum(~np.any(F.values != 0, axis=0)))}
        if "similarities" in paths:
            S = load_similarities(paths["similarities"])
        else:
            records = load_ratings(paths["ratings"])
            S = aggregate_ratings(records, F.item_ids, scale=scale)
            entry["n_ratings"] = len(records)
            if len({r.rater_id for r in records}) >= 2:
                entry["split_half_r2"] = split_half_reliability(records, F.item_ids, cfg.seed,
                                                                cfg["metric"])
        DomainDataset(name, F, S)
        entry["n_missing_pairs"] = len(S.missing_pairs())
        save_features(F, out.path(f"{name}/features.csv"), header_comments=cfg.comments())
        save_similarities(S, out.path(f"{name}/similarities.csv"), header_comments=cfg.comments())
        summary[name] = entry
    return {"datasets": summary}


def _save_fit_weights(cfg, out, name, w: WeightVector, lam) -> str:
    rel = f"weights/{name}.csv"
    save_weights(w, out.path(rel), lam=lam, provenance=cfg.config_hash,
                 extra={"seed": cfg.seed, "dataset": name})
    return rel


def cmd_fit(cfg: RunConfig, out: Artifacts) -> dict:
    results = {}
    lam = cfg.values.get("lambda")
    ridge_cfg = RidgeConfig(seed=cfg.seed)
    for d in _load(cfg):
        mask = _mask(d.similarities)
        if lam is None:
            w, report = cv_fit(d.features, d.similarities, cfg["lambda_grid"], mask=mask,
                               cfg=ridge_cfg, **cfg.cv_kwargs())
            entry = {**report.fit, "lambda_selection": "cross-validation",
                     "heldout_r2": report.r2_transformed, "raw_r2": report.r2_raw}
            lam_used = report.lambda_star
        else:
            X = build_design_matrix(d.features, d.similarities, mask=mask)
            kw = cfg.fit_kwargs()
            fit = fit_ridge(X, float(lam), kw["solver"], kw["nonnegative"], ridge_cfg,
                            kw["fit_intercept"], kw["center_targets"])
            w, lam_used = fit.weights, float(lam)
            entry = {**fit.report(), "lambda_selection": "fixed", "n_pairs": X.n_rows}
        entry["weights_file"] = _save_fit_weights(cfg, out, d.name, w, lam_used)
        entry["weights_sha256"] = w.digest()
        results[d.name] = entry
    return {"fits": results}


def cmd_evaluate(cfg: RunConfig, out: Artifacts) -> dict:
    results, rows = {}, []
    grid = cfg["lambda_grid"]
    table1 = bool(cfg.get("table1", False))
    for d in _load(cfg):
        mask = _mask(d.similarities)
        kw = cfg.cv_kwargs()
        w, report = cv_fit(d.features, d.similarities, grid, mask=mask, **kw)
        results[d.name] = report.to_dict()
        _save_fit_weights(cfg, out, d.name, w, report.lambda_star)
        if table1:
            main = report if report.fold_mode == "pair" else cv_fit(
                d.features, d.similarities, grid, mask=mask, **{**kw, "fold_mode": "pair"}).report
            control = report if report.fold_mode == "image" else cv_fit(
                d.features, d.similarities, grid, mask=mask, **{**kw, "fold_mode": "image"}).report
            row = {"dataset": d.name, "raw_r2": main.r2_raw, "transformed_r2": main.r2_transformed,
                   "cv_control_r2": control.r2_transformed}
            ratings = cfg.datasets[d.name].get("ratings")
            if ratings is not None:
                row["human_split_half_r2"] = split_half_reliability(
                    load_ratings(ratings), d.features.item_ids, cfg.seed, cfg["metric"])
            rows.append(row)
    doc = {"evaluations": results}
    if table1:
        out.table("table1", rows, "table1")
        doc["table1"] = rows
    return doc


def cmd_baseline(cfg: RunConfig, out: Artifacts) -> dict:
    modes = cfg.get("modes", list(PERMUTATION_MODES))
    n_repeats = int(cfg.get("n_repeats", 10))
    results, lines = {}, ["dataset,mode,median,max,n_repeats"]
    for d in _load(cfg):
        per = {}
        for mode in modes:
            scores = permutation_baseline(
                d.features, d.similarities, mode, n_repeats, cfg.seed,
                lambda_grid=cfg["lambda_grid"], n_folds=int(cfg["n_folds"]),
                fold_mode=cfg["fold_mode"], mask=_mask(d.similarities), **cfg.fit_kwargs(),
            )
            per[mode] = {"scores": scores, "median": float(np.median(scores)), "max": float(max(scores))}
            lines.append(f"{d.name},{mode},{format_float(per[mode]['median'])},"
                         f"{format_float(per[mode]['max'])},{n_repeats}")
        results[d.name] = per
    comments = "".join(f"# {k}={v}\n" for k, v in cfg.comments().items())
    out.text("baseline.csv", comments + "\n".join(lines) + "\n")
    return {"baselines": results}


def cmd_transfer(cfg: RunConfig, out: Artifacts) -> dict:
    datasets = _load(cfg)
    fits = {}
    for d in datasets:
        path = cfg.datasets[d.name].get("weights")
        if path is None:
            fits[d.name] = cv_fit(d.features, d.similarities, cfg["lambda_grid"],
                                  mask=_mask(d.similarities), **cfg.cv_kwargs())
        else:
            fits[d.name] = FitResult(load_weights(path), None)
    rows = transfer_table(datasets, fits=fits, metric=cfg["metric"])
    out.table("table2", rows, "table2")
    return {"table2": rows}


def cmd_joint_fit(cfg: RunConfig, out: Artifacts) -> dict:
    datasets = _load(cfg)
    w, report = joint_fit(datasets, cfg["lambda_grid"], **cfg.cv_kwargs())
    rel = _save_fit_weights(cfg, out, "joint", w, report.lambda_star)
    return {"joint": {**report.to_dict(), "weights_file": rel}}


def cmd_lodo(cfg: RunConfig, out: Artifacts) -> dict:
    datasets = _load(cfg)
    rows = lodo_table(datasets, cfg["lambda_grid"], **cfg.cv_kwargs())
    out.table("table3", rows, "table3")
    return {"table3": rows}


def cmd_embed(cfg: RunConfig, out: Artifacts) -> dict:
    results = {}
    dim = int(cfg.get("dim", 2))
    for d in _load(cfg):
        S = _similarity_in(cfg, d, cfg.get("space", "empirical"))
        D = sim_to_dist(S, cfg.get("distance", "max-shift"))
        emb = nonmetric_mds(D, dim=dim, max_iter=int(cfg.get("max_iter", 10000)),
                            tol=float(cfg.get("tol", 1e-100)), n_init=int(cfg.get("n_init", 4)),
                            seed=cfg.seed)
        lines = ["item_id," + ",".join(f"x{k + 1}" for k in range(dim))]
        for item, row in zip(d.features.item_ids, emb.coords):
            lines.append(item + "," + ",".join(format_float(v) for v in row))
        comments = "".join(f"# {k}={v}\n" for k, v in cfg.comments().items())
        out.text(f"embedding/{d.name}.csv", comments + "\n".join(lines) + "\n")
        sidecar = {"stress": emb.stress, "converged": emb.converged, "stop_reason": emb.stop_reason,
                   "n_iter": emb.n_iter, "restart_stress": list(emb.restart_stress),
                   "n_restarts_used": emb.n_restarts_used, "dim": dim}
        out.json(f"embedding/{d.name}.json", sidecar)
        results[d.name] = sidecar
    return {"embeddings": results}


def cmd_dendrogram(cfg: RunConfig, out: Artifacts) -> dict:
    results = {}
    for d in _load(cfg):
        S = _similarity_in(cfg, d, cfg.get("space", "empirical"))
        D = sim_to_dist(S, cfg.get("distance", "max-shift"))
        tree = hca_centroid(D, distances=True, item_ids=d.features.item_ids)
        lines = ["cluster_a,cluster_b,height,size"]
        for a, b, h, n in tree.merges:
            lines.append(f"{int(a)},{int(b)},{format_float(h)},{int(n)}")
        comments = "".join(f"# {k}={v}\n" for k, v in cfg.comments().items())
        out.text(f"dendrogram/{d.name}.csv", comments + "\n".join(lines) + "\n")
        tag = " ".join(f"{k}={v}" for k, v in cfg.comments().items())
        out.text(f"dendrogram/{d.name}.nwk", f"[{tag}]{tree.to_newick()}\n")
        results[d.name] = {"n_merges": len(tree.merges),
                           "inversions": int(np.sum(np.diff(tree.heights) < 0))}
    return {"dendrograms": results, "linkage": "centroid"}


def cmd_cluster(cfg: RunConfig, out: Artifacts) -> dict:
    ks = cfg.get("ks", list(DEFAULT_KS))
    spaces = cfg.get("spaces", list(SPACES))
    results = {}
    datasets = _load(cfg)
    for d in datasets:
        per = {}
        for space in spaces:
            S = _similarity_in(cfg, d, space)
            for k in ks:
                P = build_categories(S, k, seed=cfg.seed, source=space,
                                     n_restarts=int(cfg.get("n_restarts", 10)),
                                     max_iter=int(cfg.get("max_iter", 300)))
                rel = f"categories/{d.name}_{space}_k{k}.csv"
                save_partition(P, out.path(rel), {**cfg.comments(), "space": space, "k": k})
                per[f"{space}_k{k}"] = {"inertia": P.inertia, "file": rel,
                                        "sizes": np.bincount(P.labels).tolist()}
        results[d.name] = per
    write_manifest(out.path("categories/manifest.json"), [d.name for d in datasets], ks, spaces,
                   extra={"provenance": cfg.provenance()})
    return {"partitions": results}


def cmd_synth(cfg: RunConfig, out: Artifacts) -> dict:
    spec = SynthSpec(**{**(cfg.get("synth", {})), "seed": cfg.seed})
    res = generate(spec)
    datasets = {}
    truth = {}
    for d, w, scale in zip(res.datasets, res.weights, res.noise_scale):
        f_rel, s_rel, w_rel = (f"{d.name}/features.csv", f"{d.name}/similarities.csv",
                               f"{d.name}/true_weights.csv")
        save_features(d.features, out.path(f_rel), header_comments=cfg.comments())
        save_similarities(d.similarities, out.path(s_rel), header_comments=cfg.comments())
        save_weights(w, out.path(w_rel), provenance=cfg.config_hash, extra={"seed": cfg.seed})
        datasets[d.name] = {"features": f_rel, "similarities": s_rel}
        truth[d.name] = {"weights_file": w_rel, "noise_sd_absolute": scale,
                         "n_informative": int(np.count_nonzero(w.values)),
                         "ceiling_r2": res.ceiling_r2(len(truth))}
    # A ready-made config pointing at the generated files.
    out.text("datasets.json", json.dumps({"datasets": datasets, "provenance": cfg.provenance()},
                                         indent=2, sort_keys=True) + "\n")
    return {"spec": spec.to_dict(), "ground_truth": truth}


def cmd_report(cfg: RunConfig, out: Artifacts) -> dict:
    src = Path(cfg["input"])
    if not src.is_absolute():
        src = cfg.base_dir / src
    if not src.is_file():
        raise ConfigError(f"results file {cfg['input']!r} does not exist")
    doc = json.loads(src.read_text())
    kind = cfg["kind"]
    rows = doc.get(kind, doc.get("rows")) if isinstance(doc, dict) else doc
    t = out.table(kind, rows or [], kind)
    return {"kind": kind, "n_rows": len(t.rows), "gaps": t.gaps,
            "source": {"path": _relative(src.resolve(), cfg.base_dir), "sha256": sha256_file(src)}}


HANDLERS = {
    "ingest": cmd_ingest, "fit": cmd_fit, "evaluate": cmd_evaluate, "baseline": cmd_baseline,
    "transfer": cmd_transfer, "joint-fit": cmd_joint_fit, "lodo": cmd_lodo, "embed": cmd_embed,
    "dendrogram": cmd_dendrogram, "cluster": cmd_cluster, "synth": cmd_synth, "report": cmd_report,
}


def run(cfg: RunConfig) -> dict:
    """Dispatch one configured command; returns the report document."""
    out = Artifacts(cfg)
    doc = HANDLERS[cfg.command](cfg, out)
    doc["inputs"] = _input_hashes(cfg)
    doc["config"] = {k: v for k, v in cfg.values.items() if k != "output_dir"}
    out.report(doc)
    return doc


# --------------------------------------------------------------------------
# Entry point


def _configure_logging():
    level = os.environ.get(ENV_VERBOSITY, "warning").strip().lower()
    levels = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG, "quiet": logging.ERROR,
              "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _error_doc(exc: BaseException, code: int, cfg: RunConfig | None, command: str | None) -> dict:
    doc = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc),
           "command": command}
    if isinstance(exc, ParseError):
        path = exc.path
        if path is not None and cfg is not None:
            path = _relative(Path(path).resolve(), cfg.base_dir)
        doc["file"] = str(path) if path is not None else None
        doc["line"] = exc.line
    if cfg is not None:
        doc.update(cfg.provenance())
    return doc


def _report_error(exc, code, cfg, command, output_dir=None):
    doc = _error_doc(exc, code, cfg, command)
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    target = cfg.output_dir if cfg is not None else output_dir
    if target is not None:
        try:
            target = Path(target)
            target.mkdir(parents=True, exist_ok=True)
            (target / "error.json").write_text(text)
        except OSError:
            pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simalign",
                                     description="Learn feature reweightings that align model and human similarity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--strict", action="store_true", help="fail on incomplete tables")
    cvopts = argparse.ArgumentParser(add_help=False)
    cvopts.add_argument("--lambda-grid", dest="lambda_grid", help="comma-separated penalties")
    cvopts.add_argument("--n-folds", dest="n_folds", type=int)
    cvopts.add_argument("--metric", choices=METRICS)
    cvopts.add_argument("--fold-mode", dest="fold_mode", choices=FOLD_MODES)
    cvopts.add_argument("--solver", choices=("closed", "iterative"))
    cvopts.add_argument("--nonnegative", action="store_true")
    spaceopts = argparse.ArgumentParser(add_help=False)
    spaceopts.add_argument("--space", choices=_SIM_SPACES)

    helps = {
        "ingest": "validate inputs, aggregate ratings, z-score features",
        "fit": "fit weights at a fixed or cross-validated penalty",
        "evaluate": "cross-validated scores (optionally the per-domain summary table)",
        "baseline": "permutation controls",
        "transfer": "score each domain's weights on every other domain",
        "joint-fit": "one weight vector for all domains",
        "lodo": "leave-one-domain-out generalization",
        "embed": "non-metric MDS embedding",
        "dendrogram": "centroid-linkage hierarchical clustering",
        "cluster": "k-means categories from similarity rows",
        "synth": "generate synthetic domains with known weights",
        "report": "render stored results as a table",
    }
    parsers = {}
    for name in COMMANDS:
        parents = [common]
        if name in ("fit", "evaluate", "baseline", "transfer", "joint-fit", "lodo"):
            parents.append(cvopts)
        if name in ("embed", "dendrogram"):
            parents += [cvopts, spaceopts]
        if name == "cluster":
            parents.append(cvopts)
        parsers[name] = sub.add_parser(name, parents=parents, help=helps[name])
    parsers["fit"].add_argument("--lambda", dest="lam", type=float, help="fixed penalty")
    parsers["evaluate"].add_argument("--table1", action="store_true",
                                     help="also write the raw/transformed/control table")
    parsers["baseline"].add_argument("--n-repeats", dest="n_repeats", type=int)
    parsers["embed"].add_argument("--dim", type=int)
    parsers["embed"].add_argument("--n-init", dest="n_init", type=int)
    parsers["embed"].add_argument("--max-iter", dest="max_iter", type=int)
    parsers["dendrogram"].add_argument("--linkage", choices=("centroid",))
    parsers["report"].add_argument("--kind", choices=TABLE_KINDS)
    parsers["report"].add_argument("--input")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging()
    cfg = None
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        _report_error(exc, EXIT_CONFIG, None, args.command, getattr(args, "output_dir", None))
        return EXIT_CONFIG
    try:
        run(cfg)
    except ConfigError as exc:
        _report_error(exc, EXIT_CONFIG, cfg, cfg.command)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error report
        log.debug("command failed", exc_info=True)
        _report_error(exc, EXIT_RUNTIME, cfg, cfg.command)
        return EXIT_RUNTIME
    if os.environ.get(ENV_VERBOSITY, "").strip().lower() != "quiet":
        print(cfg.output_dir / f"{cfg.command.replace('-', '_')}_report.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
