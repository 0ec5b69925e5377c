"""Simulated regression models with missing covariates and their Bayes oracles.

Covariates are ``Unif[-1, 1]^d``.  Models 3 and 4 overwrite the first and
third coordinates so that they depend on the fourth and fifth:
``x1 = sqrt(x4 + 1) - 0.7 + U[-0.3, 0.3]`` and ``x3 = 0.7 x5 + U[-0.3, 0.3]``.
Models 2 and 4 hide ``x2`` and ``x3`` exactly when they exceed 0.4.

The Bayes regression function ``E[Y | Z = z, Omega = omega]`` only depends
on the observed coordinates of ``z`` whenever the imputer is deterministic
and leaves observed entries untouched, because ``Z`` and the observed part of
``X`` then determine each other given ``Omega``.  The oracles below therefore
serve every imputer in :mod:`penn.missingness`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .missingness import MCAR, ThresholdMNAR, draw_mask

MODELS = ("example1", "model1", "model2", "model3", "model4")
MNAR_THRESHOLD = 0.4
MAX_PROPOSALS = 10_000_000


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimModel:
    """One of the simulated data-generating processes.

    ``observe_prob`` is the MCAR observation probability of every coordinate
    not governed by the threshold mechanism.
    """

    kind: str
    d: int
    observe_prob: float = 0.7

    def __post_init__(self):
        if self.kind not in MODELS:
            raise ValueError(f"unknown model {self.kind!r}; choose from {MODELS}")
        need = {"example1": 1, "model1": 3, "model2": 3, "model3": 5, "model4": 5}[self.kind]
        if self.d < need:
            raise ValueError(f"{self.kind} needs d >= {need}, got {self.d}")
        if not 0.0 <= self.observe_prob <= 1.0:
            raise ValueError("observe_prob must lie in [0, 1]")

    @property
    def noise_sd(self) -> float:
        return 0.1 if self.kind == "example1" else 0.5

    @property
    def mnar(self) -> bool:
        return self.kind in ("model2", "model4")

    @property
    def correlated(self) -> bool:
        return self.kind in ("model3", "model4")

    @property
    def mechanism(self):
        q = [self.observe_prob] * self.d
        if self.mnar:
            return ThresholdMNAR((1, 2), MNAR_THRESHOLD, q)
        return MCAR(q)

    @property
    def relevant(self) -> int:
        """Number of leading coordinates the regression function reads."""
        return 1 if self.kind == "example1" else 3

    def regression(self, x: np.ndarray) -> np.ndarray:
        """Noise-free regression function on rows of ``x`` (at least ``relevant`` columns)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "example1":
            return 3.0 * x[..., 0] ** 2
        if self.kind in ("model1", "model3"):
            return np.exp(x[..., 0] + x[..., 1]) + 4.0 * x[..., 2] ** 2
        return 2.0 * np.sin(2.0 * x[..., 0] + 2.0 * x[..., 1]) + 2.0 * x[..., 2]


def sample(model: SimModel, n: int, rng: np.random.Generator):
    """Draw ``n`` i.i.d. rows ``(X, Omega, Y)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = rng.uniform(-1.0, 1.0, size=(n, model.d))
    if model.correlated:
        X[:, 0] = np.sqrt(X[:, 3] + 1.0) - 0.7 + rng.uniform(-0.3, 0.3, size=n)
        X[:, 2] = 0.7 * X[:, 4] + rng.uniform(-0.3, 0.3, size=n)
    noise = rng.normal(0.0, model.noise_sd, size=n)
    omega = draw_mask(model.mechanism, X, rng)
    Y = model.regression(X) + noise
    return X, omega, Y


# -- conditional laws --------------------------------------------------------


def _missing_interval(model: SimModel, j: int):
    """Support of ``X_j`` given that it is missing, for independent-coordinate models."""
    if model.mnar and j in (1, 2):
        return MNAR_THRESHOLD, 1.0
    return -1.0, 1.0


def _uniform_mean_exp(lo, hi, t):
    """``E exp(t X)`` for ``X ~ Unif[lo, hi]`` (``t`` may be complex)."""
    return (np.exp(t * hi) - np.exp(t * lo)) / (t * (hi - lo))


class ClosedFormOracle:
    """Analytic Bayes regression function for Example 1 and Models 1-2."""

    kind = "closed_form"

    def __init__(self, model: SimModel, imputer: str = "zero"):
        if model.kind not in ("example1", "model1", "model2"):
            raise OracleError(f"no closed-form Bayes regression function for {model.kind}")
        self.model = model
        self.imputer = imputer

    def values(self, Z, Omega) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        obs = np.atleast_2d(np.asarray(Omega)).astype(bool)
        m = self.model
        if m.kind == "example1":
            return np.where(obs[:, 0], 3.0 * Z[:, 0] ** 2, 1.0)
        if m.kind == "model1":
            e_exp = math.sinh(1.0)
            a = np.where(obs[:, 0], np.exp(Z[:, 0]), e_exp) * np.where(obs[:, 1], np.exp(Z[:, 1]), e_exp)
            return a + np.where(obs[:, 2], 4.0 * Z[:, 2] ** 2, 4.0 / 3.0)
        # model2: E sin(2X1 + 2X2) = Im(E e^{2iX1} E e^{2iX2}) by independence
        phase = np.ones(Z.shape[0], dtype=complex)
        for j in (0, 1):
            lo, hi = _missing_interval(m, j)
            phase *= np.where(obs[:, j], np.exp(2j * Z[:, j]), _uniform_mean_exp(lo, hi, 2j))
        lo, hi = _missing_interval(m, 2)
        third = np.where(obs[:, 2], Z[:, 2], 0.5 * (lo + hi))
        return 2.0 * phase.imag + 2.0 * third

    def value(self, z, omega) -> float:
        return float(self.values([z], [omega])[0])

    def values_with_se(self, Z, Omega):
        v = self.values(Z, Omega)
        return v, np.zeros_like(v)


class MonteCarloOracle:
    """Bayes regression function by averaging over the conditional law of missing coordinates.

    For each query the missing relevant coordinates are drawn from their law
    given the observed coordinates and the event that they are missing;
    threshold events are imposed by rejection with a cap of
    ``MAX_PROPOSALS`` proposals per query.
    """

    kind = "monte_carlo"

    def __init__(self, model: SimModel, imputer: str = "zero", budget: int = 100_000, seed: int = 0):
        if budget < 10_000:
            raise ValueError("Monte Carlo budget must be >= 1e4")
        self.model = model
        self.imputer = imputer
        self.budget = int(budget)
        self.seed = seed

    def _coordinate(self, j, z, obs, rng):
        m, B = self.model, self.budget
        if obs[j]:
            return np.full(B, z[j])
        constrained = m.mnar and j in (1, 2)
        parent = {0: 3, 2: 4}.get(j) if m.correlated else None
        if parent is not None and obs[parent]:
            base = math.sqrt(z[3] + 1.0) - 0.7 if j == 0 else 0.7 * z[4]
            lo = -0.3
            if constrained:
                lo = max(lo, MNAR_THRESHOLD - base)
                if lo >= 0.3:
                    raise OracleError(
                        f"coordinate {j} cannot be missing when coordinate {parent} equals {z[parent]}"
                    )
            # truncated uniform noise drawn directly, equivalent to rejection
            return base + rng.uniform(lo, 0.3, size=B)
        out = np.empty(0)
        proposals = 0
        while out.size < B:
            k = max(B, 1024)
            if parent is None:
                draw = rng.uniform(-1.0, 1.0, size=k)
            elif j == 0:
                draw = np.sqrt(rng.uniform(-1.0, 1.0, size=k) + 1.0) - 0.7 + rng.uniform(-0.3, 0.3, size=k)
            else:
                draw = 0.7 * rng.uniform(-1.0, 1.0, size=k) + rng.uniform(-0.3, 0.3, size=k)
            proposals += k
            if constrained:
                draw = draw[draw > MNAR_THRESHOLD]
            out = np.concatenate([out, draw])
            if out.size < B and proposals >= MAX_PROPOSALS:
                raise OracleError(f"rejection sampler exhausted {proposals} proposals for coordinate {j}")
        return out[:B]

    def _query(self, z, obs, rng):
        cols = [self._coordinate(j, z, obs, rng) for j in range(self.model.relevant)]
        g = self.model.regression(np.column_stack(cols))
        return float(g.mean()), float(g.std(ddof=1) / math.sqrt(g.size))

    def values_with_se(self, Z, Omega):
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        obs = np.atleast_2d(np.asarray(Omega)).astype(bool)
        rng = np.random.default_rng(self.seed)
        res = np.array([self._query(z, o, rng) for z, o in zip(Z, obs)]).reshape(-1, 2)
        return res[:, 0], res[:, 1]

    def values(self, Z, Omega) -> np.ndarray:
        return self.values_with_se(Z, Omega)[0]

    def value(self, z, omega) -> float:
        return float(self.values([z], [omega])[0])


def make_oracle(model: SimModel, imputer: str = "zero", kind: str = "auto",
                budget: int = 100_000, seed: int = 0):
    """Closed form when available (``kind='auto'``), otherwise Monte Carlo."""
    if kind == "closed_form" or (kind == "auto" and model.kind in ("example1", "model1", "model2")):
        return ClosedFormOracle(model, imputer)
    if kind in ("auto", "monte_carlo"):
        return MonteCarloOracle(model, imputer, budget, seed)
    raise ValueError(f"unknown oracle kind {kind!r}")


def bayes_value(oracle, z, omega) -> float:
    return oracle.value(z, omega)


def bayes_risk(oracle, n_mc: int, rng: np.random.Generator):
    """Monte Carlo estimate of ``E (f*(Z, Omega) - Y)^2`` and its standard error."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be >= 1e4")
    X, omega, Y = sample(oracle.model, n_mc, rng)
    f = oracle.values(X * omega, omega)
    sq = (f - Y) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_mc))
