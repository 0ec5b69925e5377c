"""Dense warm-up, magnitude pruning, survivor re-initialisation and sparse retraining.

The pipeline trains a dense network with Adam for a few epochs, then for
each keep-proportion ``lam`` in a grid prunes all but the ``ceil(lam * W)``
largest-magnitude weights (biases are never pruned), redraws the surviving
parameters, retrains with early stopping on the validation loss and
finally picks the ``lam`` with the smallest validation loss.

Networks are anything exposing the small interface shared by
:class:`~penn.nn.Mlp` and :class:`~penn.arch.Penn`: ``param_vector``,
``with_params``, ``with_mask``, ``mask``, ``weight_flags``, ``init_bounds``,
``predict`` and ``loss_and_grad``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .nn import AdamState, NonFiniteError, adam_step, loss_value

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    warm_epochs: int = 10
    lambda_grid: tuple = (0.1, 0.2, 0.4, 0.8)
    early_stop_delta: float = 0.001
    early_stop_patience: int = 10
    max_epochs: int = 500
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: str = "squared"
    seed: int = 0

    def __post_init__(self):
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        if not self.lambda_grid or any(not 0.0 < v <= 1.0 for v in self.lambda_grid):
            raise ValueError("lambda_grid values must lie in (0, 1]")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.early_stop_delta < 0:
            raise ValueError("early_stop_delta must be >= 0")
        if self.warm_epochs < 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.loss not in ("squared", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def adam(self, n: int) -> AdamState:
        return AdamState.zeros(n, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps)


@dataclass
class Split:
    """Imputed covariates ``z``, revelation vectors ``omega`` and responses ``y``."""

    z: np.ndarray
    omega: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.y = np.asarray(self.y)
        if not (len(self.z) == len(self.omega) == len(self.y)):
            raise ValueError("z, omega and y differ in length")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "Split":
        return Split(self.z[idx], self.omega[idx], self.y[idx])


@dataclass
class LambdaResult:
    lam: float
    train_losses: list
    val_losses: list
    best_val_loss: float
    best_epoch: int
    stop_epoch: int
    n_kept_weights: int
    network: object = field(repr=False, default=None)


@dataclass
class TrainReport:
    warm_train_losses: list
    results: list
    selected_lambda: float
    selected_network: object = field(repr=False, default=None)
    wall_clock: float = 0.0

    @property
    def selected(self) -> LambdaResult:
        return next(r for r in self.results if r.lam == self.selected_lambda)

    def to_dict(self) -> dict:
        from .arch import network_to_dict

        return {
            "selected_lambda": self.selected_lambda,
            "wall_clock": self.wall_clock,
            "warm_train_losses": self.warm_train_losses,
            "results": [
                {
                    "lambda": r.lam,
                    "train_losses": r.train_losses,
                    "val_losses": r.val_losses,
                    "best_val_loss": r.best_val_loss,
                    "best_epoch": r.best_epoch,
                    "stop_epoch": r.stop_epoch,
                    "n_kept_weights": r.n_kept_weights,
                }
                for r in self.results
            ],
            "selected_network": None if self.selected_network is None
            else network_to_dict(self.selected_network),
        }

    def curves_csv(self) -> str:
        lines = ["lambda,epoch,train_loss,val_loss"]
        for e, tl in enumerate(self.warm_train_losses, start=1):
            lines.append(f"warm,{e},{tl!r},")
        for r in self.results:
            for e, (tl, vl) in enumerate(zip(r.train_losses, r.val_losses), start=1):
                lines.append(f"{r.lam!r},{e},{tl!r},{vl!r}")
        return "\n".join(lines) + "\n"


class EarlyStopping:
    """Patience rule on a validation curve.

    Training stops once ``patience`` consecutive epochs have passed without
    the loss dropping at least ``delta`` below the best loss so far.  The
    lowest loss seen (regardless of ``delta``) is tracked separately as the
    snapshot to return.
    """

    def __init__(self, delta: float = 0.001, patience: int = 10):
        self.delta = delta
        self.patience = patience
        self.best = math.inf
        self.stale = 0
        self.lowest = math.inf
        self.lowest_epoch = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's loss; True means stop now."""
        self.epoch += 1
        if loss < self.lowest:
            self.lowest = loss
            self.lowest_epoch = self.epoch
        if loss < self.best - self.delta:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _run_epoch(net, theta, mask, state, data: Split, config: TrainConfig, rng, where: str):
    """One shuffled pass of mini-batch Adam; updates ``theta`` in place."""
    n = len(data)
    order = rng.permutation(n)
    total = 0.0
    for b, start in enumerate(range(0, n, config.batch_size)):
        idx = order[start:start + config.batch_size]
        current = net.with_params(theta)
        try:
            value, grad = current.loss_and_grad(data.z[idx], data.omega[idx], data.y[idx], config.loss)
        except NonFiniteError as err:
            raise NonFiniteError(err.layer, f"{where}, batch {b}") from None
        if not math.isfinite(value):
            raise NonFiniteError(0, f"{where}, batch {b}: loss is {value}")
        adam_step(state, theta, grad, mask)
        total += value * len(idx)
    return total / n


def warm_train(net, train: Split, config: TrainConfig, rng: np.random.Generator):
    """``config.warm_epochs`` epochs of dense Adam; returns ``(network, train losses)``."""
    if len(train) == 0:
        raise ValueError("empty training set")
    theta = net.param_vector()
    state = config.adam(theta.size)
    losses = []
    for epoch in range(1, config.warm_epochs + 1):
        losses.append(_run_epoch(net, theta, None, state, train, config, rng, f"warm epoch {epoch}"))
    return net.with_params(theta), losses


def magnitude_prune(net, lam: float):
    """Keep the ``ceil(lam * W)`` largest-magnitude weights and every bias.

    Weights are ranked jointly across all layers (and all sub-networks);
    ties go to the earlier flat index.  Returns the masked network.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must lie in (0, 1]")
    theta = net.param_vector()
    is_weight = net.weight_flags()
    widx = np.flatnonzero(is_weight)
    keep = math.ceil(lam * widx.size)
    order = np.argsort(-np.abs(theta[widx]), kind="stable")
    mask = ~is_weight
    mask[widx[order[:keep]]] = True
    theta[~mask] = 0.0
    return net.with_params(theta, mask)


def reinitialize_survivors(net, rng: np.random.Generator):
    """Redraw every unmasked parameter from the initialisation law; masked stay 0."""
    mask = net.mask
    if mask is None:
        raise ValueError("network has no mask; prune it first")
    bounds = net.init_bounds()
    theta = rng.uniform(-bounds, bounds)
    theta[~mask] = 0.0
    return net.with_params(theta, mask)


def train_with_early_stopping(net, train: Split, val: Split, config: TrainConfig,
                              rng: np.random.Generator):
    """Retrain with Adam until the validation loss stalls.

    Returns ``(network, stop_epoch, train_losses, val_losses, best_epoch)``
    where ``network`` is the parameter snapshot with the lowest validation
    loss.
    """
    if len(val) == 0:
        raise ValueError("empty validation set")
    theta = net.param_vector()
    mask = net.mask
    state = config.adam(theta.size)
    stopper = EarlyStopping(config.early_stop_delta, config.early_stop_patience)
    best_theta = theta.copy()
    train_losses, val_losses = [], []
    for epoch in range(1, config.max_epochs + 1):
        train_losses.append(_run_epoch(net, theta, mask, state, train, config, rng, f"epoch {epoch}"))
        vl = loss_value(net.with_params(theta), val.z, val.omega, val.y, config.loss)
        if not math.isfinite(vl):
            raise NonFiniteError(0, f"epoch {epoch}: validation loss is {vl}")
        val_losses.append(vl)
        stop = stopper.update(vl)
        if stopper.lowest_epoch == epoch:
            best_theta = theta.copy()
        if stop:
            break
    return net.with_params(best_theta, mask), epoch, train_losses, val_losses, stopper.lowest_epoch


def select_lambda(results: Sequence[LambdaResult]) -> LambdaResult:
    """Smallest best-validation loss; ties go to the smaller ``lam``."""
    return min(results, key=lambda r: (r.best_val_loss, r.lam))


def lambda_sweep(builder: Callable, train: Split, val: Split, config: TrainConfig) -> TrainReport:
    """Full protocol: one warm phase, then prune/reinitialise/retrain per ``lam``.

    ``builder(rng)`` returns a freshly initialised dense network.
    """
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(config.seed).spawn(2 + len(config.lambda_grid))
    net = builder(np.random.default_rng(seeds[0]))
    warm, warm_losses = warm_train(net, train, config, np.random.default_rng(seeds[1]))
    results = []
    for lam, ss in zip(config.lambda_grid, seeds[2:]):
        rng = np.random.default_rng(ss)
        pruned = magnitude_prune(warm, lam)
        fresh = reinitialize_survivors(pruned, rng)
        fitted, stop, tl, vl, best = train_with_early_stopping(fresh, train, val, config, rng)
        kept = int(np.count_nonzero(fitted.mask & fitted.weight_flags()))
        results.append(LambdaResult(lam, tl, vl, vl[best - 1], best, stop, kept, fitted))
        log.info("lambda=%g stop=%d best_val=%.5g", lam, stop, vl[best - 1])
    chosen = select_lambda(results)
    return TrainReport(warm_losses, results, chosen.lam, chosen.network, time.perf_counter() - t0)
