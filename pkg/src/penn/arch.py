"""Pattern embedded networks ``f3(concat(f1(z), f2(omega)))``."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import (
    Architecture,
    Mlp,
    ShapeError,
    _as_batch,
    _backward,
    _forward_cached,
    _loss_head,
    forward,
    mlp_from_dict,
    mlp_to_dict,
)


@dataclass
class Penn:
    """Three sub-networks combined as ``f3(f1(z), f2(omega))``.

    ``f2`` is the embedding function; its output width is the embedding
    dimension.  The joint parameter vector is the concatenation of the
    three sub-network vectors in the order f1, f2, f3, and so is the
    optional joint mask.
    """

    f1: Mlp
    f2: Mlp
    f3: Mlp
    budget: Optional[int] = None

    def __post_init__(self):
        if self.f1.n_in != self.f2.n_in:
            raise ShapeError(
                f"f1 takes {self.f1.n_in} covariates but f2 takes {self.f2.n_in} pattern bits"
            )
        if self.f3.n_in != self.f1.n_out + self.f2.n_out:
            raise ShapeError(
                f"f3 input width {self.f3.n_in} != {self.f1.n_out} + {self.f2.n_out}"
            )

    @property
    def d(self) -> int:
        return self.f1.n_in

    @property
    def embedding_dim(self) -> int:
        return self.f2.n_out

    @property
    def n_out(self) -> int:
        return self.f3.n_out

    @property
    def parts(self) -> tuple:
        return (self.f1, self.f2, self.f3)

    def _splits(self):
        sizes = [f.architecture.n_params for f in self.parts]
        return np.cumsum(sizes)[:-1]

    @property
    def n_params(self) -> int:
        return sum(f.architecture.n_params for f in self.parts)

    @property
    def mask(self) -> Optional[np.ndarray]:
        if all(f.mask is None for f in self.parts):
            return None
        return np.concatenate(
            [np.ones(f.architecture.n_params, bool) if f.mask is None else f.mask for f in self.parts]
        )

    def param_vector(self) -> np.ndarray:
        return np.concatenate([f.theta for f in self.parts])

    def with_params(self, theta: np.ndarray, mask=None) -> "Penn":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got {theta.size}")
        if mask is None:
            mask = self.mask
        thetas = np.split(theta, self._splits())
        masks = [None] * 3 if mask is None else np.split(np.asarray(mask, bool), self._splits())
        f1, f2, f3 = (Mlp(f.architecture, t, m) for f, t, m in zip(self.parts, thetas, masks))
        return Penn(f1, f2, f3, self.budget)

    def with_mask(self, mask) -> "Penn":
        return self.with_params(self.param_vector(), mask)

    def weight_flags(self) -> np.ndarray:
        return np.concatenate([f.weight_flags() for f in self.parts])

    def init_bounds(self) -> np.ndarray:
        return np.concatenate([f.init_bounds() for f in self.parts])

    def nonzero_count(self) -> int:
        return sum(f.nonzero_count() for f in self.parts)

    def within_budget(self) -> bool:
        return self.budget is None or self.nonzero_count() <= self.budget

    def copy(self) -> "Penn":
        return Penn(self.f1.copy(), self.f2.copy(), self.f3.copy(), self.budget)

    @classmethod
    def init(cls, arch1, arch2, arch3, rng: np.random.Generator, budget=None) -> "Penn":
        return cls(Mlp.init(arch1, rng), Mlp.init(arch2, rng), Mlp.init(arch3, rng), budget)

    def __call__(self, z, omega) -> np.ndarray:
        return penn_forward(self, z, omega)

    def predict(self, z, omega) -> np.ndarray:
        return penn_forward(self, z, omega)

    def loss_and_grad(self, z, omega, y, loss: str = "squared"):
        return penn_loss_and_grad(self, z, omega, y, loss)


def penn_forward(net: Penn, z, omega) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if z.shape != omega.shape:
        raise ShapeError(f"z has shape {z.shape} but omega has shape {omega.shape}")
    h = np.concatenate([forward(net.f1, z), forward(net.f2, omega)], axis=-1)
    return forward(net.f3, h)


def embed(net: Penn, omega) -> np.ndarray:
    return forward(net.f2, omega)


def penn_loss_and_grad(net: Penn, z, omega, y, loss: str = "squared"):
    """Batch-mean loss and the joint gradient (f1, f2, f3 blocks concatenated)."""
    z, _ = _as_batch(net.f1, z)
    omega, _ = _as_batch(net.f2, omega)
    if z.shape[0] == 0:
        raise ValueError("empty batch")
    if z.shape[0] != omega.shape[0]:
        raise ShapeError("z and omega batches differ in length")
    o1, c1 = _forward_cached(net.f1, z)
    o2, c2 = _forward_cached(net.f2, omega)
    out, c3 = _forward_cached(net.f3, np.concatenate([o1, o2], axis=1))
    value, g = _loss_head(out, y, loss)
    g3, g_in = _backward(net.f3, c3, g)
    k = net.f1.n_out
    g1, _ = _backward(net.f1, c1, g_in[:, :k])
    g2, _ = _backward(net.f2, c2, g_in[:, k:])
    return value, np.concatenate([g1, g2, g3])


def paper_nn(d: int, n_out: int = 1, width: int = 70) -> Mlp:
    """Zero-initialised baseline ``(6, (d, w, w, w, w, w, w, n_out))``."""
    return Mlp.zeros(Architecture([d] + [width] * 6 + [n_out]))


def paper_penn_architectures(d: int, n_out: int = 1, width: int = 70, embedding_dim: int = 3):
    arch1 = Architecture([d] + [width] * 4)
    arch2 = Architecture([d, 30, 30, embedding_dim])
    arch3 = Architecture([width + embedding_dim] + [width] * 3 + [n_out])
    return arch1, arch2, arch3


def build_paper_penn(d: int, task: str = "regression", n_classes: int = 2,
                     width: int = 70, embedding_dim: int = 3, rng=None) -> Penn:
    """PENN with the architecture used for the simulated experiments.

    f1 is ``(3, (d, w, w, w, w))``, f2 is ``(2, (d, 30, 30, 3))`` and f3 is
    ``(3, (w + 3, w, w, w, out))``; ``width=100`` gives the real-data
    variant.  Parameters are zero unless ``rng`` is supplied.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if task == "regression":
        n_out = 1
    elif task == "classification":
        n_out = int(n_classes)
    else:
        raise ValueError(f"unknown task {task!r}")
    archs = paper_penn_architectures(d, n_out, width, embedding_dim)
    if rng is None:
        return Penn(*(Mlp.zeros(a) for a in archs))
    return Penn.init(*archs, rng=rng)


def penn_to_dict(net: Penn) -> dict:
    return {
        "type": "penn",
        "budget": net.budget,
        "f1": mlp_to_dict(net.f1),
        "f2": mlp_to_dict(net.f2),
        "f3": mlp_to_dict(net.f3),
    }


def penn_from_dict(doc: dict) -> Penn:
    if doc.get("type") != "penn":
        raise ValueError(f"not a penn document: type={doc.get('type')!r}")
    return Penn(mlp_from_dict(doc["f1"]), mlp_from_dict(doc["f2"]),
                mlp_from_dict(doc["f3"]), doc.get("budget"))


def network_to_dict(net) -> dict:
    return penn_to_dict(net) if isinstance(net, Penn) else mlp_to_dict(net)


def network_from_dict(doc: dict):
    return penn_from_dict(doc) if doc.get("type") == "penn" else mlp_from_dict(doc)


def dumps(net: Penn) -> str:
    return json.dumps(penn_to_dict(net))


def loads(text: str) -> Penn:
    return penn_from_dict(json.loads(text))
