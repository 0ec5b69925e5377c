"""Repeated train/evaluate runs comparing PENN with a plain network."""

from __future__ import annotations

import dataclasses
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .arch import build_paper_penn, paper_nn
from .datagen import OracleError, SimModel, make_oracle, sample
from .io import ExperimentConfig, finite_or_none, read_dataset
from .metrics import MetricsRecord, excess_risk, mce, mse, pair_records, paired_comparison, puv
from .missingness import PartialMatrix, fit_imputer
from .nn import Mlp
from .training import Split, lambda_sweep

log = logging.getLogger(__name__)

THREADS_ENV = "PENN_THREADS"


def _splits_for(config: ExperimentConfig, seed: int):
    """Raw ``(X, omega, y)`` for train/validation/test."""
    rng = np.random.default_rng(seed)
    if config.dataset is None:
        model = SimModel(config.model, config.d, config.observe_prob)
        sizes = (config.n_train, config.n_val, config.n_test)
        X, omega, y = sample(model, sum(sizes), rng)
    else:
        X, omega, y = read_dataset(config.dataset)
        perm = rng.permutation(len(y))
        X, omega, y = X[perm], omega[perm], y[perm]
        ratio = np.asarray(config.split_ratio, float)
        n_train = int(round(len(y) * ratio[0] / ratio.sum()))
        n_val = int(round(len(y) * ratio[1] / ratio.sum()))
        sizes = (n_train, n_val, len(y) - n_train - n_val)
        if min(sizes) < 2:
            raise ValueError(f"dataset of {len(y)} rows is too small to split as {config.split_ratio}")
    cuts = np.cumsum(sizes)[:-1]
    return [tuple(a[s] for a in (X, omega, y)) for s in np.split(np.arange(len(y)), cuts)], sizes


def _impute(kind, config, parts):
    X = np.concatenate([p[0] for p in parts])
    omega = np.concatenate([p[1] for p in parts])
    data = PartialMatrix(np.where(omega == 1, X, np.nan), omega == 1)
    options = dataclasses.asdict(config.iterative) if kind == "iterative" else {}
    if config.imputer_fit == "all":
        imputer = fit_imputer(kind, data, **options)
        Z = imputer.fit_transform(data) if kind == "iterative" else imputer.transform(data)
    else:
        n_train = len(parts[0][2])
        train = PartialMatrix(data.values[:n_train], data.observed[:n_train])
        imputer = fit_imputer(kind, train, **options)
        Z = imputer.transform(data)
    cuts = np.cumsum([len(p[2]) for p in parts])[:-1]
    return [Split(z, o, p[2]) for z, o, p in zip(np.split(Z, cuts), np.split(omega, cuts), parts)]


def _builder(estimator: str, config: ExperimentConfig, d: int):
    n_out = config.n_classes if config.task == "classification" else 1
    if estimator == "PENN":
        return lambda rng: build_paper_penn(d, config.task, config.n_classes, config.width,
                                            config.embedding_dim, rng=rng)
    arch = paper_nn(d, n_out, config.width).architecture
    return lambda rng: Mlp.init(arch, rng)


def _oracle(config: ExperimentConfig, seed: int, imputer: str):
    if config.dataset is not None or config.oracle.kind == "none":
        return None
    model = SimModel(config.model, config.d, config.observe_prob)
    return make_oracle(model, imputer, config.oracle.kind, max(config.oracle.budget, 10_000), seed)


def run_repetition(config: ExperimentConfig, rep: int, keep_predictions: bool = False) -> dict:
    """One seeded repetition over every imputer and estimator."""
    seed = config.seed + rep
    parts, sizes = _splits_for(config, seed)
    d = parts[0][0].shape[1]
    loss = "cross_entropy" if config.task == "classification" else "squared"
    records = []
    predictions = {}
    for i, kind in enumerate(config.imputers):
        train, val, test = _impute(kind, config, parts)
        oracle = _oracle(config, seed, kind)
        f_star = None
        if oracle is not None:
            try:
                f_star = oracle.values(test.z, test.omega)
            except OracleError as err:
                log.warning("seed %d: oracle failed (%s); excess risk omitted", seed, err)
        if keep_predictions:
            predictions[kind] = {"z": test.z, "omega": test.omega, "y": test.y, "f_star": f_star}
        for e, est in enumerate(config.estimators):
            tc = dataclasses.replace(config.train, loss=loss, seed=[seed, i, e])
            report = lambda_sweep(_builder(est, config, d), train, val, tc)
            pred = report.selected_network.predict(test.z, test.omega)
            if config.task == "classification":
                rec = MetricsRecord(est, float("nan"), len(test), mce=mce(pred, test.y))
            else:
                er = excess_risk(pred, f_star, test.y) if f_star is not None else (None, None)
                rec = MetricsRecord(est, mse(pred, test.y), len(test), puv=puv(pred, test.y),
                                    excess_risk=er[0], excess_risk_se=er[1])
            if keep_predictions:
                predictions[kind][est] = np.asarray(pred)
            row = rec.to_dict()
            row.update(seed=seed, imputer=kind, selected_lambda=report.selected_lambda,
                       stop_epochs=[r.stop_epoch for r in report.results],
                       val_losses={repr(r.lam): r.best_val_loss for r in report.results})
            records.append(row)
            log.info("seed %d %s/%s: lambda=%g %s", seed, kind, est, report.selected_lambda,
                     {k: row[k] for k in ("excess_risk", "mse", "puv", "mce") if row[k] is not None})
    out = {"seed": seed, "sizes": list(sizes), "records": records}
    if keep_predictions:
        out["predictions"] = predictions
    return out


def _safe_repetition(args):
    config, rep, keep = args
    try:
        return run_repetition(config, rep, keep)
    except Exception as err:  # a failed repetition is recorded, not fatal
        return {"seed": config.seed + rep, "error": f"{type(err).__name__}: {err}",
                "traceback": traceback.format_exc()}


def run_experiment(config: ExperimentConfig, keep_predictions: bool = False) -> tuple[dict, dict]:
    """All repetitions plus per-imputer paired summaries."""
    jobs = [(config, rep, keep_predictions and rep == 0) for rep in range(config.repetitions)]
    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(_safe_repetition, jobs))
    else:
        reps = [_safe_repetition(j) for j in jobs]
    reps.sort(key=lambda r: r["seed"])
    records = [rec for r in reps if "records" in r for rec in r["records"]]
    failures = [{"seed": r["seed"], "error": r["error"]} for r in reps if "error" in r]
    for f in failures:
        log.error("seed %d failed: %s", f["seed"], f["error"])
    comparisons = {}
    if set(config.estimators) == {"PENN", "NN"}:
        for kind in config.imputers:
            pairs = [(r["seed"], MetricsRecord(**_metric_fields(r)))
                     for r in records if r["imputer"] == kind]
            if pairs:
                comparisons[kind] = paired_comparison(pair_records(pairs))
    doc = {
        "config": config.to_dict(),
        "records": [_clean(r) for r in records],
        "failures": failures,
        "comparisons": comparisons,
        "metadata": {
            "repetitions": config.repetitions,
            "note": "desk-scale repetition count; the reference experiments use 10 to 100 repetitions",
        },
    }
    predictions = next((r["predictions"] for r in reps if "predictions" in r), None)
    return doc, predictions


def _metric_fields(row: dict) -> dict:
    names = {f.name for f in dataclasses.fields(MetricsRecord)}
    return {k: row[k] for k in names}


def _clean(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, float) or k in ("mse", "puv", "mce", "excess_risk", "excess_risk_se"):
            out[k] = finite_or_none(v)
        elif isinstance(v, dict):
            out[k] = {kk: finite_or_none(vv) for kk, vv in v.items()}
        else:
            out[k] = v
    return out


PER_SEED_COLUMNS = ("seed", "imputer", "label", "selected_lambda", "excess_risk", "excess_risk_se",
                    "mse", "puv", "mce", "n_test")


def per_seed_csv(doc: dict) -> str:
    lines = [",".join(PER_SEED_COLUMNS)]
    for r in doc["records"]:
        lines.append(",".join("" if r.get(c) is None else repr(r[c]) if isinstance(r[c], float)
                              else str(r[c]) for c in PER_SEED_COLUMNS))
    return "\n".join(lines) + "\n"


PRESETS = {
    "example1": dict(model="example1", d=1, imputers=["zero"], n_train=1000, n_val=500, n_test=1000),
    "model1": dict(model="model1", d=20, imputers=["mean", "iterative"], n_train=10_000, n_val=5000, n_test=5000),
    "model2": dict(model="model2", d=20, imputers=["mean", "iterative"], n_train=10_000, n_val=5000, n_test=5000),
    "model3": dict(model="model3", d=20, imputers=["mean", "iterative"], n_train=10_000, n_val=5000, n_test=5000),
    "model4": dict(model="model4", d=20, imputers=["mean", "iterative"], n_train=10_000, n_val=5000, n_test=5000),
}


DEFAULT_SCALE = {"example1": 1.0}


def preset_config(preset: str, scale=None, **overrides) -> ExperimentConfig:
    """Configuration for a named preset with sample sizes multiplied by ``scale``.

    The default scale is 1 for Example 1 and 0.2 for the simulated models.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if scale is None:
        scale = DEFAULT_SCALE.get(preset, 0.2)
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    base = dict(PRESETS[preset])
    for key in ("n_train", "n_val", "n_test"):
        base[key] = max(2, int(round(base[key] * scale)))
    base.update(overrides)
    return ExperimentConfig.from_dict(base)
