"""Dense ReLU multilayer perceptrons with exact reverse-mode gradients.

Parameters of an :class:`Mlp` live in a single flat vector ordered as
``(vec(W_1), b_1, ..., vec(W_{L+1}), b_{L+1})`` where ``vec`` stacks columns
(Fortran order).  Weight matrices and bias vectors are views into that
vector, so rebuilding a network around a new parameter vector is free.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions disagree with a network architecture."""

    def __init__(self, message: str, layer: Optional[int] = None):
        super().__init__(message)
        self.layer = layer


class NonFiniteError(FloatingPointError):
    """Raised when a forward pass produces NaN or inf.

    ``layer`` is the 1-based index of the first affine layer whose output is
    non-finite.
    """

    def __init__(self, layer: int, where: str = ""):
        msg = f"non-finite values at layer {layer}"
        if where:
            msg = f"{msg} ({where})"
        super().__init__(msg)
        self.layer = layer


@dataclass(frozen=True)
class Architecture:
    """Depth ``L`` (hidden layers) and widths ``(p_0, ..., p_{L+1})``."""

    widths: tuple

    def __init__(self, widths: Sequence[int]):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ShapeError(f"need at least input and output widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ShapeError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def of(cls, depth: int, widths: Sequence[int]) -> "Architecture":
        """Build from the ``(L, p)`` pair, checking ``len(p) == L + 2``."""
        if len(widths) != depth + 2:
            raise ShapeError(f"depth {depth} needs {depth + 2} widths, got {len(widths)}")
        return cls(widths)

    @property
    def depth(self) -> int:
        return len(self.widths) - 2

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        p = self.widths
        return sum(p[l] * (p[l - 1] + 1) for l in range(1, len(p)))

    @property
    def n_weights(self) -> int:
        p = self.widths
        return sum(p[l] * p[l - 1] for l in range(1, len(p)))

    def layer_slices(self):
        """Yield ``(weight_slice, bias_slice, shape)`` for each affine layer."""
        offset = 0
        p = self.widths
        for l in range(1, len(p)):
            shape = (p[l], p[l - 1])
            nw = shape[0] * shape[1]
            yield slice(offset, offset + nw), slice(offset + nw, offset + nw + p[l]), shape
            offset += nw + p[l]

    def weight_flags(self) -> np.ndarray:
        """Boolean vector over the flat parameters, True at weight entries."""
        flags = np.zeros(self.n_params, dtype=bool)
        for ws, _, _ in self.layer_slices():
            flags[ws] = True
        return flags

    def init_bounds(self) -> np.ndarray:
        """Per-parameter half-widths of the uniform initialisation law.

        Weights use ``sqrt(6 / fan_in)`` (Kaiming-uniform for ReLU) and
        biases ``1 / sqrt(fan_in)``.
        """
        bounds = np.empty(self.n_params)
        for ws, bs, shape in self.layer_slices():
            fan_in = shape[1]
            bounds[ws] = math.sqrt(6.0 / fan_in)
            bounds[bs] = 1.0 / math.sqrt(fan_in)
        return bounds

    def __str__(self) -> str:
        return f"({self.depth}, {self.widths})"


@dataclass
class Mlp:
    """A feedforward ReLU network ``A_{L+1} o relu o A_L o ... o relu o A_1``.

    ``mask`` is either None (dense) or a boolean vector over the flat
    parameters; positions where it is False are held at exactly zero.
    """

    architecture: Architecture
    theta: np.ndarray
    mask: Optional[np.ndarray] = None
    weights: list = field(init=False, repr=False)
    biases: list = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size != self.architecture.n_params:
            raise ShapeError(
                f"parameter vector has length {theta.size}, "
                f"architecture {self.architecture} needs {self.architecture.n_params}"
            )
        if not theta.flags.c_contiguous:
            theta = np.ascontiguousarray(theta)
        self.theta = theta
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != theta.shape:
                raise ShapeError(f"mask has shape {mask.shape}, expected {theta.shape}")
            self.mask = mask
        self.weights = []
        self.biases = []
        for ws, bs, shape in self.architecture.layer_slices():
            self.weights.append(theta[ws].reshape(shape, order="F"))
            self.biases.append(theta[bs])

    @classmethod
    def from_layers(cls, weights, biases, mask=None) -> "Mlp":
        weights = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in weights]
        biases = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in biases]
        if len(weights) != len(biases) or not weights:
            raise ShapeError("need one bias vector per weight matrix")
        widths = [weights[0].shape[1]]
        for l, (w, b) in enumerate(zip(weights, biases), start=1):
            if w.shape[1] != widths[-1]:
                raise ShapeError(
                    f"layer {l} expects input width {w.shape[1]}, previous width is {widths[-1]}",
                    layer=l,
                )
            if b.shape != (w.shape[0],):
                raise ShapeError(f"layer {l} bias has shape {b.shape}", layer=l)
            widths.append(w.shape[0])
        arch = Architecture(widths)
        parts = []
        for w, b in zip(weights, biases):
            parts.append(w.ravel(order="F"))
            parts.append(b)
        return cls(arch, np.concatenate(parts), mask)

    @classmethod
    def zeros(cls, architecture: Architecture) -> "Mlp":
        return cls(architecture, np.zeros(architecture.n_params))

    @classmethod
    def init(cls, architecture: Architecture, rng: np.random.Generator) -> "Mlp":
        """Random network drawn from the Kaiming-uniform-equivalent law."""
        bounds = architecture.init_bounds()
        return cls(architecture, rng.uniform(-bounds, bounds))

    @property
    def depth(self) -> int:
        return self.architecture.depth

    @property
    def n_in(self) -> int:
        return self.architecture.n_in

    @property
    def n_out(self) -> int:
        return self.architecture.n_out

    def param_vector(self) -> np.ndarray:
        return self.theta.copy()

    def with_params(self, theta: np.ndarray, mask=None) -> "Mlp":
        return Mlp(self.architecture, theta, self.mask if mask is None else mask)

    def with_mask(self, mask) -> "Mlp":
        return Mlp(self.architecture, self.theta.copy(), mask)

    def weight_flags(self) -> np.ndarray:
        return self.architecture.weight_flags()

    def init_bounds(self) -> np.ndarray:
        return self.architecture.init_bounds()

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.theta))

    def copy(self) -> "Mlp":
        mask = None if self.mask is None else self.mask.copy()
        return Mlp(self.architecture, self.theta.copy(), mask)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    def predict(self, z, omega=None) -> np.ndarray:
        """Network output on a batch; ``omega`` is ignored (no pattern input)."""
        return forward(self, z)

    def loss_and_grad(self, z, omega, y, loss: str = "squared"):
        return loss_and_grad(self, z, y, loss)


def unflatten(architecture: Architecture, theta, mask=None) -> Mlp:
    """Inverse of :meth:`Mlp.param_vector`."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != architecture.n_params:
        raise ShapeError(
            f"expected {architecture.n_params} parameters for {architecture}, got {theta.size}"
        )
    return Mlp(architecture, theta.copy(), mask)


def param_vector(net: Mlp) -> np.ndarray:
    return net.param_vector()


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ShapeError(
            f"layer 1 expects inputs of width {net.n_in}, got shape {x.shape[1:] if not single else x.shape[1:]}",
            layer=1,
        )
    return x, single


def forward(net: Mlp, x) -> np.ndarray:
    """Evaluate ``net`` on a vector or a batch of row vectors."""
    h, single = _as_batch(net, x)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if l < last:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def _forward_cached(net: Mlp, x: np.ndarray, check: bool = True):
    """Forward pass keeping every layer's input for the backward sweep."""
    inputs = []
    h = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ w.T + b
        if check and not np.all(np.isfinite(a)):
            raise NonFiniteError(l + 1)
        h = np.maximum(a, 0.0) if l < last else a
    return h, inputs


def _backward(net: Mlp, inputs, grad_out: np.ndarray):
    """Reverse sweep; returns the flat parameter gradient and the input gradient.

    ``inputs[l]`` is the input of affine layer ``l``; for hidden layers it is
    also ``relu(pre-activation)``, so ``inputs[l] > 0`` is the ReLU
    derivative with the subgradient 0 taken at exactly 0.
    """
    grad = np.empty(net.architecture.n_params)
    slices = list(net.architecture.layer_slices())
    g = grad_out
    for l in range(len(net.weights) - 1, -1, -1):
        ws, bs, shape = slices[l]
        h = inputs[l]
        grad[ws] = (g.T @ h).ravel(order="F")
        grad[bs] = g.sum(axis=0)
        g = g @ net.weights[l]
        if l > 0:
            g = g * (h > 0)
    if net.mask is not None:
        grad[~net.mask] = 0.0
    return grad, g


def _loss_head(out: np.ndarray, y: np.ndarray, loss: str):
    n = out.shape[0]
    if loss == "squared":
        y = np.asarray(y, dtype=np.float64).reshape(n, -1)
        if y.shape != out.shape:
            raise ShapeError(f"targets of shape {y.shape} do not match outputs {out.shape}")
        r = out - y
        return float(np.mean(np.sum(r * r, axis=1))), 2.0 * r / n
    if loss == "cross_entropy":
        if out.shape[1] < 2:
            raise ShapeError("cross-entropy needs at least two output scores")
        labels = np.asarray(y).astype(np.int64).ravel()
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        value = -float(np.mean(logp[np.arange(n), labels]))
        g = np.exp(logp)
        g[np.arange(n), labels] -= 1.0
        return value, g / n
    raise ValueError(f"unknown loss {loss!r}")


def loss_and_grad(net: Mlp, x, y, loss: str = "squared"):
    """Batch-mean loss and its exact gradient with respect to the flat parameters."""
    x, _ = _as_batch(net, x)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    out, inputs = _forward_cached(net, x)
    value, g = _loss_head(out, y, loss)
    grad, _ = _backward(net, inputs, g)
    return value, grad


def loss_value(net, z, omega, y, loss: str = "squared") -> float:
    out = net.predict(z, omega)
    if out.ndim == 1:
        out = out[:, None]
    return _loss_head(out, y, loss)[0]


@dataclass
class AdamState:
    """Bias-corrected Adam moment estimates for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, mask=None):
    """One Adam update, in place on ``params`` and ``state``.

    Masked-out positions are neither updated nor accumulate moments.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if mask is not None:
        grads = np.where(mask, grads, 0.0)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if mask is not None:
        step[~mask] = 0.0
    params -= step
    return params, state


def truncate(y, bound: float):
    """Clamp ``y`` to ``[-bound, bound]``."""
    if bound < 0:
        raise ValueError("truncation bound must be non-negative")
    return np.clip(y, -bound, bound) if np.ndim(y) else float(min(max(y, -bound), bound))


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "type": "mlp",
        "widths": list(net.architecture.widths),
        "theta": [float(v) for v in net.theta],
        "mask": None if net.mask is None else [int(b) for b in net.mask],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    if doc.get("type") != "mlp":
        raise ValueError(f"not an mlp document: type={doc.get('type')!r}")
    arch = Architecture(doc["widths"])
    mask = doc.get("mask")
    return Mlp(arch, np.array(doc["theta"], dtype=np.float64),
               None if mask is None else np.array(mask, dtype=bool))


def dumps(net: Mlp) -> str:
    # json emits floats with repr(), which round-trips float64 exactly
    return json.dumps(mlp_to_dict(net))


def loads(text: str) -> Mlp:
    return mlp_from_dict(json.loads(text))
