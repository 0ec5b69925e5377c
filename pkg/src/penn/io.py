"""Dataset CSV files, experiment configs and output manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .training import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


# -- datasets ----------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def dataset_to_csv(X, omega, y) -> str:
    """CSV with columns ``x_1..x_d, omega_1..omega_d, y``; missing ``x`` entries are empty."""
    X = np.asarray(X, dtype=np.float64)
    omega = np.asarray(omega).astype(np.int64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{j}" for j in range(1, d + 1)] + [f"omega_{j}" for j in range(1, d + 1)] + ["y"])
    for xi, oi, yi in zip(X, omega, y):
        w.writerow([_fmt(v) if o else "" for v, o in zip(xi, oi)] + [str(o) for o in oi] + [_fmt(yi)])
    return buf.getvalue()


def write_dataset(path, X, omega, y) -> Path:
    path = Path(path)
    path.write_text(dataset_to_csv(X, omega, y))
    return path


def read_dataset(path):
    """Load a dataset CSV; returns ``(X, omega, y)`` with NaN at missing ``x``.

    ``omega_*`` columns are optional; without them the pattern is read off
    the empty (or ``NaN``) cells.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    ocols = [i for i, h in enumerate(header) if h.startswith("omega_")]
    if "y" not in header or not xcols:
        raise ValueError(f"{path}: need x_* columns and a y column")
    ycol = header.index("y")
    if ocols and len(ocols) != len(xcols):
        raise ValueError(f"{path}: {len(xcols)} x columns but {len(ocols)} omega columns")
    n, d = len(body), len(xcols)
    X = np.full((n, d), np.nan)
    omega = np.zeros((n, d), dtype=np.int64)
    y = np.empty(n)
    for r, row in enumerate(body, start=2):
        for j, c in enumerate(xcols):
            cell = row[c].strip()
            if cell and cell.lower() != "nan":
                X[r - 2, j] = float(cell)
        present = ~np.isnan(X[r - 2])
        if ocols:
            omega[r - 2] = [int(row[c]) for c in ocols]
            if np.any(omega[r - 2].astype(bool) != present):
                raise ValueError(f"{path}: line {r}: omega disagrees with missing cells")
        else:
            omega[r - 2] = present
        y[r - 2] = float(row[ycol])
    return X, omega, y


# -- manifests ---------------------------------------------------------------


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, files, **meta) -> Path:
    out_dir = Path(out_dir)
    entries = [{"path": str(Path(f).relative_to(out_dir)), "sha256": sha256(f)} for f in files]
    doc = dict(meta)
    doc["files"] = sorted(entries, key=lambda e: e["path"])
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


# -- experiment configuration ------------------------------------------------


@dataclass
class OracleSettings:
    kind: str = "auto"
    budget: int = 10_000


@dataclass
class IterativeSettings:
    rounds: int = 5
    ridge: float = 1e-3


@dataclass
class ExperimentConfig:
    model: Optional[str] = "model1"
    d: int = 10
    observe_prob: float = 0.7
    dataset: Optional[str] = None
    task: str = "regression"
    n_classes: int = 2
    imputers: list = field(default_factory=lambda: ["mean"])
    imputer_fit: str = "all"
    estimators: list = field(default_factory=lambda: ["PENN", "NN"])
    n: int = 1000
    n_train: int = 2000
    n_val: int = 1000
    n_test: int = 1000
    split_ratio: list = field(default_factory=lambda: [8, 1, 1])
    repetitions: int = 10
    seed: int = 0
    width: int = 70
    embedding_dim: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    iterative: IterativeSettings = field(default_factory=IterativeSettings)
    out: str = "results"
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        from .datagen import MODELS, SimModel
        from .missingness import IMPUTERS

        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}", "schema_version")
        if self.dataset is None:
            if self.model not in MODELS:
                raise ConfigError(f"model must be one of {MODELS}", "model")
            try:
                SimModel(self.model, self.d, self.observe_prob)
            except ValueError as err:
                raise ConfigError(str(err), "d") from None
        if self.task not in ("regression", "classification"):
            raise ConfigError("task must be 'regression' or 'classification'", "task")
        if self.task == "classification" and self.dataset is None:
            raise ConfigError("classification needs a dataset file", "task")
        if not self.imputers or any(k not in IMPUTERS for k in self.imputers):
            raise ConfigError(f"imputers must be a non-empty subset of {sorted(IMPUTERS)}", "imputers")
        if self.imputer_fit not in ("all", "train"):
            raise ConfigError("imputer_fit must be 'all' or 'train'", "imputer_fit")
        if not self.estimators or any(e not in ("PENN", "NN") for e in self.estimators):
            raise ConfigError("estimators must be a non-empty subset of ['PENN', 'NN']", "estimators")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("duplicate estimators", "estimators")
        for key in ("n", "n_train", "n_val", "n_test", "repetitions", "width", "embedding_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1", key)
        if self.n_test < 2:
            raise ConfigError("n_test must be >= 2", "n_test")
        if len(self.split_ratio) != 3 or any(r <= 0 for r in self.split_ratio):
            raise ConfigError("split_ratio needs three positive entries", "split_ratio")
        if self.oracle.kind not in ("auto", "closed_form", "monte_carlo", "none"):
            raise ConfigError("oracle.kind must be auto, closed_form, monte_carlo or none", "oracle.kind")
        if self.oracle.kind == "monte_carlo" and self.oracle.budget < 10_000:
            raise ConfigError("oracle.budget must be >= 10000", "oracle.budget")
        if self.iterative.rounds < 1:
            raise ConfigError("iterative.rounds must be >= 1", "iterative.rounds")
        return self

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["train"]["lambda_grid"] = list(self.train.lambda_grid)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        nested = {"train": TrainConfig, "oracle": OracleSettings, "iterative": IterativeSettings}
        kwargs = {}
        names = {f.name for f in fields(cls)}
        for key, value in doc.items():
            if key not in names:
                raise ConfigError(f"unknown key {key!r}", key)
            if key in nested:
                sub = nested[key]
                allowed = {f.name for f in fields(sub)}
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be an object", key)
                for k in value:
                    if k not in allowed:
                        raise ConfigError(f"unknown key {key}.{k}", f"{key}.{k}")
                try:
                    value = sub(**value)
                except (TypeError, ValueError) as err:
                    raise ConfigError(f"{key}: {err}", key) from None
            kwargs[key] = value
        try:
            cfg = cls(**kwargs)
        except TypeError as err:
            raise ConfigError(str(err)) from None
        return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(doc)


def finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None
