"""Exact constructions on ReLU networks and pattern-separating networks.

Everything here builds explicit :class:`~penn.nn.Mlp` objects whose outputs
agree with the intended function up to floating-point rounding of affine
arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .nn import Architecture, Mlp, ShapeError, forward, mlp_from_dict, mlp_to_dict

MAX_ENUM_DIM = 20


class PartitionError(ValueError):
    """A partition is malformed or does not have the declared structure.

    ``patterns`` holds the offending pattern(s) as tuples when available.
    """

    def __init__(self, message: str, patterns=()):
        super().__init__(message)
        self.patterns = tuple(tuple(int(v) for v in p) for p in patterns)


def _as_pattern(omega) -> tuple:
    return tuple(int(v) for v in omega)


@dataclass
class PatternPartition:
    """Disjoint, non-empty cells of binary patterns; ``S`` is their union."""

    cells: list
    probabilities: Optional[list] = None

    def __post_init__(self):
        cells = [[_as_pattern(w) for w in cell] for cell in self.cells]
        if not cells:
            raise PartitionError("partition has no cells")
        dims = {len(w) for cell in cells for w in cell}
        if len(dims) != 1:
            raise PartitionError(f"patterns have inconsistent lengths {sorted(dims)}")
        owner = {}
        for k, cell in enumerate(cells):
            if not cell:
                raise PartitionError(f"cell {k} is empty")
            for w in cell:
                if any(v not in (0, 1) for v in w):
                    raise PartitionError(f"pattern {w} is not binary", [w])
                if w in owner:
                    if owner[w] == k:
                        raise PartitionError(f"pattern {w} appears twice in cell {k}", [w])
                    raise PartitionError(
                        f"pattern {w} is shared by cells {owner[w]} and {k}", [w]
                    )
                owner[w] = k
        if self.probabilities is not None:
            probs = np.asarray(self.probabilities, dtype=float)
            if probs.shape != (len(cells),) or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
                raise PartitionError("cell probabilities must be non-negative and sum to 1")
        self.cells = cells
        self._owner = owner

    @property
    def d(self) -> int:
        return len(self.cells[0][0])

    @property
    def K(self) -> int:
        return len(self.cells)

    @property
    def patterns(self) -> list:
        return [w for cell in self.cells for w in cell]

    def cell_of(self, omega) -> int:
        return self._owner[_as_pattern(omega)]

    @classmethod
    def from_labels(cls, patterns, labels) -> "PatternPartition":
        """Group ``patterns`` by integer ``labels`` (cells ordered by label)."""
        groups = {}
        for w, lab in zip(patterns, labels):
            groups.setdefault(int(lab), []).append(w)
        return cls([groups[k] for k in sorted(groups)])

    def to_dict(self) -> dict:
        return {"d": self.d, "cells": [[list(w) for w in cell] for cell in self.cells],
                "probabilities": self.probabilities}

    @classmethod
    def from_dict(cls, doc: dict) -> "PatternPartition":
        part = cls(doc["cells"], doc.get("probabilities"))
        if "d" in doc and doc["d"] != part.d:
            raise PartitionError(f"declared d={doc['d']} but patterns have length {part.d}")
        return part


def all_patterns(d: int) -> np.ndarray:
    """Every vector of ``{0,1}^d`` as rows, in lexicographic order."""
    if d > MAX_ENUM_DIM:
        raise PartitionError(f"d={d} exceeds the enumeration limit {MAX_ENUM_DIM}")
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64).reshape(-1, d)


@dataclass
class SeparationCertificate:
    """Network ``f``, anchors ``v_k`` and margin ``eps`` separating a partition.

    Valid when ``|f(w) - v_k|_inf <= eps/2`` on every cell ``k`` and
    ``|v_k - v_k'|_inf >= 2 eps`` for distinct cells.
    """

    network: Mlp
    anchors: np.ndarray
    margin: float
    method: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "type": "separation_certificate",
            "method": self.method,
            "network": mlp_to_dict(self.network),
            "anchors": np.asarray(self.anchors, float).tolist(),
            "margin": float(self.margin),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SeparationCertificate":
        return cls(mlp_from_dict(doc["network"]), np.array(doc["anchors"], float),
                   float(doc["margin"]), doc.get("method", ""), doc.get("details", {}))


@dataclass
class Verdict:
    passed: bool
    max_cell_deviation: float
    min_anchor_gap: float
    failures: list

    def __bool__(self) -> bool:
        return self.passed


def verify_certificate(cert: SeparationCertificate, partition: PatternPartition,
                       tol: float = 1e-9) -> Verdict:
    """Check both separation conditions over every pattern of the partition.

    ``tol`` absorbs rounding in the comparisons; the constructions attain
    the anchor-gap bound with equality.
    """
    anchors = np.atleast_2d(np.asarray(cert.anchors, float))
    if anchors.shape[0] != partition.K:
        anchors = anchors.T
    if anchors.shape[0] != partition.K or anchors.shape[1] != cert.network.n_out:
        raise ShapeError(f"anchors of shape {anchors.shape} do not fit K={partition.K}")
    eps = float(cert.margin)
    failures = []
    max_dev = 0.0
    if not eps > 0:
        failures.append(f"margin {eps} is not positive")
    for k, cell in enumerate(partition.cells):
        out = forward(cert.network, np.array(cell, dtype=float))
        dev = np.max(np.abs(out - anchors[k]), axis=1)
        max_dev = max(max_dev, float(dev.max()))
        for w, dv in zip(cell, dev):
            if dv > eps / 2 + tol:
                failures.append(f"pattern {w} in cell {k} is {dv:.3g} from its anchor")
    min_gap = np.inf
    for k, k2 in itertools.combinations(range(partition.K), 2):
        gap = float(np.max(np.abs(anchors[k] - anchors[k2])))
        min_gap = min(min_gap, gap)
        if gap < 2 * eps - tol:
            failures.append(f"anchors {k} and {k2} are {gap:.3g} apart, need {2 * eps:.3g}")
    return Verdict(not failures, max_dev, float(min_gap), failures)


# -- network algebra -------------------------------------------------------


def identity_net(n: int) -> Mlp:
    """Depth-0 network computing the identity on ``R^n``."""
    return Mlp.from_layers([np.eye(n)], [np.zeros(n)])


def compose(f1: Mlp, f2: Mlp) -> Mlp:
    """Network computing ``f2(f1(x))`` with depth ``L1 + L2``.

    The output layer of ``f1`` and the input layer of ``f2`` are merged
    into a single affine map.
    """
    if f1.n_out != f2.n_in:
        raise ShapeError(f"cannot compose: f1 outputs {f1.n_out}, f2 takes {f2.n_in}")
    w_mid = f2.weights[0] @ f1.weights[-1]
    b_mid = f2.weights[0] @ f1.biases[-1] + f2.biases[0]
    weights = list(f1.weights[:-1]) + [w_mid] + list(f2.weights[1:])
    biases = list(f1.biases[:-1]) + [b_mid] + list(f2.biases[1:])
    return Mlp.from_layers(weights, biases)


def pad(f: Mlp, target_depth: int) -> Mlp:
    """Deepen ``f`` to ``target_depth`` hidden layers without changing it.

    The output ``y`` is split as ``relu(y), relu(-y)``; further hidden layers
    pass these non-negative halves through identity weights and the final
    layer recombines them as ``relu(y) - relu(-y) = y``.  With ``s`` the
    original nonzero count and ``q`` the output width, the result has at
    most ``2s + 2q(target_depth - depth)`` nonzeros.
    """
    extra = target_depth - f.depth
    if extra < 0:
        raise ValueError(f"target depth {target_depth} is below current depth {f.depth}")
    if extra == 0:
        return f.copy()
    q = f.n_out
    eye = np.eye(q)
    w_last, b_last = f.weights[-1], f.biases[-1]
    weights = list(f.weights[:-1]) + [np.vstack([w_last, -w_last])]
    biases = list(f.biases[:-1]) + [np.concatenate([b_last, -b_last])]
    for _ in range(extra - 1):
        weights.append(np.eye(2 * q))
        biases.append(np.zeros(2 * q))
    weights.append(np.hstack([eye, -eye]))
    biases.append(np.zeros(q))
    return Mlp.from_layers(weights, biases)


def parallelize(nets: Sequence[Mlp]) -> Mlp:
    """Stack networks sharing an input into one whose output is their concatenation."""
    nets = list(nets)
    if not nets:
        raise ValueError("need at least one network")
    depth, n_in = nets[0].depth, nets[0].n_in
    for i, f in enumerate(nets):
        if f.n_in != n_in:
            raise ShapeError(f"network {i} takes {f.n_in} inputs, expected {n_in}")
        if f.depth != depth:
            raise ShapeError(f"network {i} has depth {f.depth}, expected {depth}; pad first")
    if len(nets) == 1:
        return nets[0].copy()
    weights = [np.vstack([f.weights[0] for f in nets])]
    for l in range(1, depth + 1):
        rows = [f.weights[l].shape[0] for f in nets]
        cols = [f.weights[l].shape[1] for f in nets]
        w = np.zeros((sum(rows), sum(cols)))
        r = c = 0
        for f, nr, nc in zip(nets, rows, cols):
            w[r:r + nr, c:c + nc] = f.weights[l]
            r += nr
            c += nc
        weights.append(w)
    biases = [np.concatenate([f.biases[l] for f in nets]) for l in range(depth + 1)]
    return Mlp.from_layers(weights, biases)


def enlarge(f: Mlp, bigger: Architecture) -> Mlp:
    """Embed ``f`` in a wider architecture by zero-filling new rows and columns."""
    small = f.architecture.widths
    big = tuple(bigger.widths)
    if len(big) != len(small):
        raise ShapeError(f"depth mismatch: {f.architecture} vs {bigger}")
    if big[0] != small[0] or big[-1] != small[-1]:
        raise ShapeError("input and output widths must be unchanged when enlarging")
    if any(b < s for b, s in zip(big, small)):
        raise ShapeError(f"{bigger} does not dominate {f.architecture} coordinatewise")
    weights, biases = [], []
    for l, (w, b) in enumerate(zip(f.weights, f.biases), start=1):
        wl = np.zeros((big[l], big[l - 1]))
        wl[: w.shape[0], : w.shape[1]] = w
        bl = np.zeros(big[l])
        bl[: b.size] = b
        weights.append(wl)
        biases.append(bl)
    return Mlp.from_layers(weights, biases)


enlarge_check = enlarge


def bump_gate(a: float, eps: float) -> Mlp:
    """Four-unit network equal to 1 on ``[a - eps/2, a + eps/2]`` and 0 off ``(a - eps, a + eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    w1 = np.full((4, 1), 2.0 / eps)
    b1 = np.array([-2 * a + 2 * eps, -2 * a + eps, -2 * a - eps, -2 * a - 2 * eps]) / eps
    w2 = np.array([[1.0, -1.0, -1.0, 1.0]])
    return Mlp.from_layers([w1, w2], [b1, np.zeros(1)])


# -- separating networks ---------------------------------------------------


def _guard(partition: PatternPartition):
    if partition.d > MAX_ENUM_DIM:
        raise PartitionError(f"d={partition.d} exceeds the enumeration limit {MAX_ENUM_DIM}")


def interpolant(x: Sequence[float], y: Sequence[float]) -> Mlp:
    """One-hidden-layer network through the points ``(x_i, y_i)``.

    Piecewise linear between consecutive sorted knots and constant outside
    them.  ``x`` must be distinct.
    """
    order = np.argsort(x, kind="stable")
    xs = np.asarray(x, float)[order]
    ys = np.asarray(y, float)[order]
    if np.any(np.diff(xs) <= 0):
        raise ValueError("interpolation knots must be distinct")
    if xs.size == 1:
        return Mlp.from_layers([np.zeros((1, 1)), np.zeros((1, 1))], [np.zeros(1), ys[:1]])
    slopes = np.diff(ys) / np.diff(xs)
    coef = np.diff(np.concatenate([[0.0], slopes]))
    # unit i is relu(x - x_i); the unit at the last knot cancels the final
    # slope so the right tail is flat, and the output bias y_1 sets the left tail
    coef = np.concatenate([coef, [-slopes[-1]]])
    w1 = np.ones((xs.size, 1))
    b1 = -xs
    return Mlp.from_layers([w1, coef[None, :]], [b1, ys[:1]])


def separate_by_coordinates(partition: PatternPartition, coords: Sequence[int]) -> SeparationCertificate:
    """Separate cells that are determined by the coordinates ``coords`` (0-based).

    Patterns are encoded as ``x = sum_i 2^i * omega[coords[i]]``; a
    piecewise-linear interpolant sends each realised code to ``(k+1)/K``
    where ``k`` is the 0-based index of the containing cell.  The margin is
    ``1/(2K)``.  The result is verified over every pattern before return.
    """
    _guard(partition)
    coords = [int(j) for j in coords]
    d, K = partition.d, partition.K
    if any(j < 0 or j >= d for j in coords) or len(set(coords)) != len(coords):
        raise PartitionError(f"coordinates {coords} are not distinct indices into [0, {d})")
    code_cell = {}
    code_pattern = {}
    for k, cell in enumerate(partition.cells):
        for w in cell:
            code = sum(w[j] << i for i, j in enumerate(coords))
            if code in code_cell and code_cell[code] != k:
                other = code_pattern[code]
                raise PartitionError(
                    f"patterns {other} and {w} agree on coordinates {coords} "
                    f"but lie in cells {code_cell[code]} and {k}",
                    [other, w],
                )
            code_cell[code] = k
            code_pattern[code] = w
    codes = sorted(code_cell)
    values = [(code_cell[c] + 1) / K for c in codes]
    encoder = np.zeros((1, d))
    for i, j in enumerate(coords):
        encoder[0, j] = float(2 ** i)
    enc = Mlp.from_layers([encoder], [np.zeros(1)])
    net = pad(compose(enc, interpolant(codes, values)), 2)
    cert = SeparationCertificate(
        net,
        np.arange(1, K + 1, dtype=float)[:, None] / K,
        1.0 / (2 * K),
        "coordinates",
        {"coordinates": coords, "n_codes": len(codes)},
    )
    verdict = verify_certificate(cert, partition)
    if not verdict:
        raise PartitionError("constructed certificate failed verification: " + "; ".join(verdict.failures))
    return cert


def halfspace_margin(partition: PatternPartition, halfspaces) -> float:
    """``min_k min_{w not in S_k} max_l (w.v - b)`` over the declared halfspaces."""
    margin = np.inf
    pts = np.array(partition.patterns, dtype=float)
    for k, hs in enumerate(halfspaces):
        outside = np.array([partition.cell_of(w) != k for w in partition.patterns])
        if not outside.any():
            continue
        v = np.array([h[0] for h in hs], float)
        b = np.array([h[1] for h in hs], float)
        slack = pts[outside] @ v.T - b
        margin = min(margin, float(slack.max(axis=1).min()))
    return margin


def separate_by_halfspaces(partition: PatternPartition, halfspaces) -> SeparationCertificate:
    """Separate cells that are intersections of halfspaces ``w.v <= b``.

    ``halfspaces[k]`` is a list of ``(v, b)`` pairs describing cell ``k``.
    The network has architecture ``(2, (d, 2P, K, 1))`` with ``P`` the total
    number of halfspaces; it outputs ``k+1`` on cell ``k``.
    """
    _guard(partition)
    d, K = partition.d, partition.K
    if len(halfspaces) != K:
        raise PartitionError(f"got halfspaces for {len(halfspaces)} cells, partition has {K}")
    hs = []
    for k, cell_hs in enumerate(halfspaces):
        if not cell_hs:
            raise PartitionError(f"cell {k} has no halfspaces")
        rows = []
        for v, b in cell_hs:
            v = np.asarray(v, float).ravel()
            if v.size != d:
                raise PartitionError(f"halfspace normal for cell {k} has length {v.size}, need {d}")
            rows.append((v, float(b)))
        hs.append(rows)
    for w in partition.patterns:
        x = np.array(w, float)
        k = partition.cell_of(w)
        for kk, rows in enumerate(hs):
            inside = all(x @ v <= b for v, b in rows)
            if inside != (kk == k):
                raise PartitionError(
                    f"pattern {w} lies in cell {k} but the halfspaces of cell {kk} "
                    f"{'contain' if inside else 'exclude'} it",
                    [w],
                )
    eps = halfspace_margin(partition, hs)
    if eps == np.inf:
        eps = 1.0
    if not eps > 0:
        raise PartitionError(f"halfspace margin {eps} is not positive")
    sizes = [len(rows) for rows in hs]
    P = sum(sizes)
    w1 = np.zeros((2 * P, d))
    b1 = np.zeros(2 * P)
    # phi = relu(-(x.v - b)/eps + 1) - relu(-(x.v - b)/eps) in {0, 1} on patterns
    gate_w = np.zeros((P, 2 * P))
    i = 0
    for rows in hs:
        for v, b in rows:
            w1[2 * i] = -v / eps
            b1[2 * i] = b / eps + 1.0
            w1[2 * i + 1] = -v / eps
            b1[2 * i + 1] = b / eps
            gate_w[i, 2 * i] = 1.0
            gate_w[i, 2 * i + 1] = -1.0
            i += 1
    # psi(u) = sum_k k * relu(sum_l u_{k,l} - P_k + 1), with u = gate_w @ hidden
    agg = np.zeros((K, P))
    b2 = np.zeros(K)
    start = 0
    for k, size in enumerate(sizes):
        agg[k, start:start + size] = 1.0
        b2[k] = 1.0 - size
        start += size
    w2 = agg @ gate_w
    w3 = np.arange(1, K + 1, dtype=float)[None, :]
    net = Mlp.from_layers([w1, w2, w3], [b1, b2, np.zeros(1)])
    cert = SeparationCertificate(
        net,
        np.arange(1, K + 1, dtype=float)[:, None],
        0.5,
        "halfspaces",
        {"halfspace_margin": eps, "halfspaces_per_cell": sizes},
    )
    verdict = verify_certificate(cert, partition)
    if not verdict:
        raise PartitionError("constructed certificate failed verification: " + "; ".join(verdict.failures))
    return cert
