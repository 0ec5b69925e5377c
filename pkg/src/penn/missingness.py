"""Revelation vectors, missingness mechanisms and single imputation.

A revelation vector ``omega`` has ``omega[j] == 1`` when coordinate ``j`` is
observed.  Partially observed data are stored as float arrays with NaN at
missing entries, alongside the boolean observation mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class ImputationError(ValueError):
    def __init__(self, message: str, column: Optional[int] = None):
        super().__init__(message)
        self.column = column


@dataclass
class PartialMatrix:
    """``n x d`` data with an explicit observation mask.

    ``values`` holds NaN wherever ``observed`` is False.
    """

    values: np.ndarray
    observed: np.ndarray
    columns: Optional[list] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, ndmin=2)
        observed = np.array(self.observed, dtype=bool, ndmin=2)
        if values.shape != observed.shape:
            raise ValueError(f"values {values.shape} and mask {observed.shape} differ in shape")
        values[~observed] = np.nan
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("observed entries must be finite")
        self.values = values
        self.observed = observed

    @classmethod
    def from_nan(cls, values, columns=None) -> "PartialMatrix":
        values = np.array(values, dtype=np.float64, ndmin=2)
        return cls(values, ~np.isnan(values), columns)

    @property
    def shape(self):
        return self.values.shape

    @property
    def omega(self) -> np.ndarray:
        return self.observed.astype(np.int64)


def mask(x, omega) -> np.ndarray:
    """``x`` with entries where ``omega == 0`` replaced by NaN."""
    x = np.asarray(x, dtype=np.float64)
    omega = np.asarray(omega)
    if x.shape != omega.shape:
        raise ValueError(f"x {x.shape} and omega {omega.shape} differ in shape")
    return np.where(omega.astype(bool), x, np.nan)


# -- mechanisms ------------------------------------------------------------


@dataclass(frozen=True)
class MCAR:
    """Coordinate ``j`` observed independently with probability ``q[j]``."""

    q: tuple

    def __init__(self, q):
        q = tuple(float(v) for v in np.atleast_1d(q))
        if any(not 0.0 <= v <= 1.0 for v in q):
            raise ValueError("observation probabilities must lie in [0, 1]")
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, d: int, q: float) -> "MCAR":
        return cls([q] * d)

    @property
    def d(self) -> int:
        return len(self.q)

    def observe_prob(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.q), x.shape)


@dataclass(frozen=True)
class ThresholdMNAR:
    """``omega[j] = 1{x[j] <= tau[j]}`` for ``j`` in ``coords``; MCAR elsewhere."""

    coords: tuple
    thresholds: tuple
    q: tuple

    def __init__(self, coords, thresholds, q):
        coords = tuple(int(j) for j in coords)
        thresholds = np.broadcast_to(np.asarray(thresholds, float), (len(coords),))
        q = tuple(float(v) for v in np.atleast_1d(q))
        if any(j < 0 or j >= len(q) for j in coords):
            raise ValueError(f"coordinates {coords} out of range for d={len(q)}")
        if any(not 0.0 <= v <= 1.0 for v in q):
            raise ValueError("observation probabilities must lie in [0, 1]")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "thresholds", tuple(float(t) for t in thresholds))
        object.__setattr__(self, "q", q)

    @property
    def d(self) -> int:
        return len(self.q)

    def observe_prob(self, x: np.ndarray) -> np.ndarray:
        p = np.array(np.broadcast_to(np.asarray(self.q), x.shape), dtype=float)
        for j, tau in zip(self.coords, self.thresholds):
            p[..., j] = (x[..., j] <= tau).astype(float)
        return p


@dataclass(frozen=True)
class LogisticMNAR:
    """Coordinate ``j`` in ``coords`` observed with probability ``1/(exp(slope*x + offset) + 1)``."""

    coords: tuple
    slopes: tuple
    offsets: tuple
    q: tuple

    def __init__(self, coords, slopes, offsets, q):
        coords = tuple(int(j) for j in coords)
        n = len(coords)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "slopes", tuple(float(v) for v in np.broadcast_to(slopes, (n,))))
        object.__setattr__(self, "offsets", tuple(float(v) for v in np.broadcast_to(offsets, (n,))))
        q = tuple(float(v) for v in np.atleast_1d(q))
        if any(not 0.0 <= v <= 1.0 for v in q):
            raise ValueError("observation probabilities must lie in [0, 1]")
        if any(j < 0 or j >= len(q) for j in coords):
            raise ValueError(f"coordinates {coords} out of range for d={len(q)}")
        object.__setattr__(self, "q", q)

    @property
    def d(self) -> int:
        return len(self.q)

    def observe_prob(self, x: np.ndarray) -> np.ndarray:
        p = np.array(np.broadcast_to(np.asarray(self.q), x.shape), dtype=float)
        for j, a, c in zip(self.coords, self.slopes, self.offsets):
            # 1/(e^t + 1) written to avoid overflow for large t
            p[..., j] = 0.5 * (1.0 - np.tanh(0.5 * (a * x[..., j] + c)))
        return p


def draw_mask(mechanism, x, rng: np.random.Generator) -> np.ndarray:
    """Draw revelation vectors for the rows of ``x`` (a vector or a matrix)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != mechanism.d:
        raise ValueError(f"mechanism has d={mechanism.d} but x has {x.shape[-1]} columns")
    p = mechanism.observe_prob(x)
    # one uniform per entry even where p is 0 or 1 keeps the stream layout fixed
    u = rng.random(x.shape)
    return (u < p).astype(np.int64)


def mechanism_to_dict(mech) -> dict:
    if isinstance(mech, MCAR):
        return {"kind": "mcar", "q": list(mech.q)}
    if isinstance(mech, ThresholdMNAR):
        return {"kind": "threshold_mnar", "coords": list(mech.coords),
                "thresholds": list(mech.thresholds), "q": list(mech.q)}
    if isinstance(mech, LogisticMNAR):
        return {"kind": "logistic_mnar", "coords": list(mech.coords), "slopes": list(mech.slopes),
                "offsets": list(mech.offsets), "q": list(mech.q)}
    raise TypeError(f"unknown mechanism {mech!r}")


def mechanism_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "mcar":
        return MCAR(doc["q"])
    if kind == "threshold_mnar":
        return ThresholdMNAR(doc["coords"], doc["thresholds"], doc["q"])
    if kind == "logistic_mnar":
        return LogisticMNAR(doc["coords"], doc["slopes"], doc["offsets"], doc["q"])
    raise ValueError(f"unknown mechanism kind {kind!r}")


# -- imputers --------------------------------------------------------------


class Imputer:
    """Fill missing entries; observed entries always pass through unchanged."""

    kind = "base"

    def fit(self, data: PartialMatrix) -> "Imputer":
        raise NotImplementedError

    def _fill(self, values: np.ndarray, observed: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_fitted(self):
        pass

    def transform(self, data) -> np.ndarray:
        self._check_fitted()
        if not isinstance(data, PartialMatrix):
            data = PartialMatrix.from_nan(data)
        out = self._fill(data.values.copy(), data.observed)
        out[data.observed] = data.values[data.observed]
        return out

    def fit_transform(self, data: PartialMatrix) -> np.ndarray:
        return self.fit(data).transform(data)


class ZeroImputer(Imputer):
    kind = "zero"

    def fit(self, data=None) -> "ZeroImputer":
        return self

    def _fill(self, values, observed):
        values[~observed] = 0.0
        return values


def _column_means(data: PartialMatrix) -> np.ndarray:
    counts = data.observed.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        j = int(empty[0])
        name = data.columns[j] if data.columns else j
        raise ImputationError(f"column {name} has no observed entries", column=j)
    return np.where(data.observed, data.values, 0.0).sum(axis=0) / counts


class MeanImputer(Imputer):
    """Replace each missing entry by its column's observed mean."""

    kind = "mean"

    def __init__(self):
        self.means_ = None

    def fit(self, data: PartialMatrix) -> "MeanImputer":
        self.means_ = _column_means(data)
        return self

    def _check_fitted(self):
        if self.means_ is None:
            raise ImputationError("imputer has not been fitted")

    def _fill(self, values, observed):
        return np.where(observed, values, self.means_)


class IterativeImputer(Imputer):
    """Chained-equation single imputation with ridge regressions.

    Missing entries start at column means.  Each round visits the columns
    in order and regresses the observed entries of column ``j`` (with an
    unpenalised intercept) on the current values of all other columns, then
    overwrites the missing entries of ``j`` with the fitted predictions.
    The coefficients of the final round are kept for :meth:`transform`.
    """

    kind = "iterative"

    def __init__(self, rounds: int = 5, ridge: float = 1e-3):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        if ridge < 0:
            raise ValueError("ridge penalty must be non-negative")
        self.rounds = int(rounds)
        self.ridge = float(ridge)
        self.means_ = None
        self.coefs_ = None
        self.completed_ = None

    def _check_fitted(self):
        if self.coefs_ is None:
            raise ImputationError("imputer has not been fitted")

    def _ridge(self, A: np.ndarray, y: np.ndarray) -> np.ndarray:
        A1 = np.hstack([np.ones((A.shape[0], 1)), A])
        penalty = self.ridge * np.eye(A1.shape[1])
        penalty[0, 0] = 0.0
        return np.linalg.solve(A1.T @ A1 + penalty, A1.T @ y)

    def fit(self, data: PartialMatrix) -> "IterativeImputer":
        self.means_ = _column_means(data)
        obs = data.observed
        X = np.where(obs, data.values, self.means_)
        d = X.shape[1]
        coefs = [None] * d
        for _ in range(self.rounds):
            for j in range(d):
                if d == 1 or obs[:, j].all():
                    continue
                others = np.delete(np.arange(d), j)
                beta = self._ridge(X[obs[:, j]][:, others], X[obs[:, j], j])
                coefs[j] = beta
                miss = ~obs[:, j]
                X[miss, j] = beta[0] + X[miss][:, others] @ beta[1:]
        self.coefs_ = coefs
        self.completed_ = X
        return self

    def _fill(self, values, observed):
        X = np.where(observed, values, self.means_)
        d = X.shape[1]
        for _ in range(self.rounds):
            for j in range(d):
                beta = self.coefs_[j]
                miss = ~observed[:, j]
                if beta is None or not miss.any():
                    continue
                others = np.delete(np.arange(d), j)
                X[miss, j] = beta[0] + X[miss][:, others] @ beta[1:]
        return X

    def fit_transform(self, data: PartialMatrix) -> np.ndarray:
        """Completed training matrix as produced during fitting."""
        self.fit(data)
        out = self.completed_.copy()
        out[data.observed] = data.values[data.observed]
        return out


IMPUTERS = {"zero": ZeroImputer, "mean": MeanImputer, "iterative": IterativeImputer}


def fit_imputer(kind: str, data: PartialMatrix, **options) -> Imputer:
    try:
        cls = IMPUTERS[kind]
    except KeyError:
        raise ValueError(f"unknown imputer {kind!r}; choose from {sorted(IMPUTERS)}") from None
    return cls(**options).fit(data)


def impute(imputer: Imputer, row, omega=None) -> np.ndarray:
    """Impute one partially observed row (NaN or ``omega == 0`` marks missing)."""
    row = np.asarray(row, dtype=np.float64)
    if omega is not None:
        row = mask(row, omega)
    single = row.ndim == 1
    out = imputer.transform(PartialMatrix.from_nan(row[None, :] if single else row))
    return out[0] if single else out
