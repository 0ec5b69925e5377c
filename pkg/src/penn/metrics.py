"""Test-set metrics and paired PENN-vs-NN summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


@dataclass
class MetricsRecord:
    label: str
    mse: float
    n_test: int
    puv: Optional[float] = None
    excess_risk: Optional[float] = None
    excess_risk_se: Optional[float] = None
    mce: Optional[float] = None

    def __post_init__(self):
        if self.puv is not None and self.puv < 0:
            raise ValueError("puv must be non-negative")
        if self.mce is not None and not 0.0 <= self.mce <= 1.0:
            raise ValueError("mce must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _flat(pred) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 2 and pred.shape[1] == 1:
        pred = pred[:, 0]
    return pred


def excess_risk(pred, oracle_values, y):
    """Paired estimate of ``R(f) - R(f*)`` and its standard error.

    Averages ``(f(z, w) - y)^2 - (f*(z, w) - y)^2`` over the test rows, so
    the response noise largely cancels between the two terms.
    """
    pred, f_star, y = _flat(pred), _flat(oracle_values), np.asarray(y, dtype=np.float64)
    terms = (pred - y) ** 2 - (f_star - y) ** 2
    se = float(terms.std(ddof=1) / math.sqrt(terms.size)) if terms.size > 1 else math.nan
    return float(terms.mean()), se


def excess_risk_of(predict, oracle, z, omega, y):
    """:func:`excess_risk` for a callable ``predict(z, omega)`` and a Bayes oracle."""
    return excess_risk(predict(z, omega), oracle.values(z, omega), y)


def mse(pred, y) -> float:
    pred, y = _flat(pred), np.asarray(y, dtype=np.float64)
    return float(np.mean((pred - y) ** 2))


def mce(scores, labels) -> float:
    """Misclassification rate of ``argmax`` class scores (ties pick the lowest class)."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels).astype(np.int64).ravel()
    return float(np.mean(np.argmax(scores, axis=1) != labels))


def puv(pred, y) -> float:
    """Test MSE divided by the sample variance (``n - 1`` divisor) of ``y``."""
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise ValueError("need at least two responses")
    var = float(np.var(y, ddof=1))
    if var == 0.0:
        raise ValueError("responses have zero variance")
    return mse(pred, y) / var


def _score(rec: MetricsRecord) -> float:
    for key in ("excess_risk", "mce", "puv"):
        value = getattr(rec, key)
        if value is not None:
            return value
    return rec.mse


def _metric_name(rec: MetricsRecord) -> str:
    for key in ("excess_risk", "mce", "puv"):
        if getattr(rec, key) is not None:
            return key
    return "mse"


def _quartiles(values) -> dict:
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))


def paired_comparison(reports) -> dict:
    """Summarise matched ``(seed, penn_record, nn_record)`` triples.

    Differences are ``NN - PENN`` on the primary metric (excess risk when
    available, else MCE, PUV or MSE), so positive values favour PENN.
    """
    reports = sorted(reports, key=lambda r: r[0])
    if not reports:
        raise ValueError("no reports to compare")
    seeds = [r[0] for r in reports]
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"duplicate seeds in comparison: {seeds}")
    metric = _metric_name(reports[0][1])
    penn = np.array([_score(p) for _, p, _ in reports])
    nn = np.array([_score(q) for _, _, q in reports])
    diff = nn - penn
    return {
        "metric": metric,
        "seeds": seeds,
        "differences": diff.tolist(),
        "penn_wins": int(np.sum(diff > 0)),
        "nn_wins": int(np.sum(diff < 0)),
        "ties": int(np.sum(diff == 0)),
        "median_difference": float(np.median(diff)),
        "penn": _quartiles(penn),
        "nn": _quartiles(nn),
        "difference": _quartiles(diff),
    }


def pair_records(records: list) -> list:
    """Match PENN and NN records by seed; raises if the seed sets differ."""
    by = {"PENN": {}, "NN": {}}
    for seed, rec in records:
        by.setdefault(rec.label, {})[seed] = rec
    if set(by["PENN"]) != set(by["NN"]):
        raise ValueError(
            f"mismatched seeds: PENN {sorted(by['PENN'])}, NN {sorted(by['NN'])}"
        )
    return [(s, by["PENN"][s], by["NN"][s]) for s in sorted(by["PENN"])]
