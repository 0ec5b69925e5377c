"""Independent oracles shared by the test modules."""

import numpy as np


def naive_forward(weights, biases, x):
    """Straight-line affine/ReLU chain, one sample at a time."""
    out = []
    for row in np.atleast_2d(x):
        h = np.array(row, dtype=float)
        for l, (w, b) in enumerate(zip(weights, biases)):
            a = np.array([sum(w[i, j] * h[j] for j in range(w.shape[1])) + b[i] for i in range(w.shape[0])])
            h = a if l == len(weights) - 1 else np.maximum(a, 0.0)
        out.append(h)
    return np.array(out)


def hidden_preactivations(net, x):
    """Hidden-layer pre-activations of an Mlp, each of shape (n, width)."""
    pre = []
    h = np.atleast_2d(x)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = h @ w.T + b
        pre.append(a)
        h = np.maximum(a, 0.0)
    return pre


def away_from_kinks(nets_and_inputs, thresh=1e-3):
    """Row mask of samples whose hidden pre-activations all exceed ``thresh`` in magnitude."""
    keep = None
    for net, x in nets_and_inputs:
        pre = hidden_preactivations(net, x)
        ok = np.ones(np.atleast_2d(x).shape[0], dtype=bool)
        for a in pre:
            ok &= np.all(np.abs(a) > thresh, axis=1)
        keep = ok if keep is None else keep & ok
    return keep


def central_differences(fun, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (fun(tp) - fun(tm)) / (2 * h)
    return g


def relative_errors(analytic, numeric, floor=1e-7):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


# filled by test_acceptance, printed by the terminal summary hook
ACCEPTANCE_LINES = []


def random_coordinate_partition(rng, d, n_coords, max_cells):
    """Partition of {0,1}^d whose cells depend on ``n_coords`` random coordinates only."""
    from penn.algebra import PatternPartition, all_patterns

    coords = sorted(rng.choice(d, size=n_coords, replace=False).tolist())
    codes = 2 ** n_coords
    label_of_code = rng.integers(0, max_cells, size=codes)
    pats = all_patterns(d)
    code = sum(pats[:, j] << i for i, j in enumerate(coords))
    labels = label_of_code[code]
    return PatternPartition.from_labels([tuple(w) for w in pats], labels), coords


def random_halfspace_partition(rng, d, max_cells):
    """Slices ``t_k < v.w <= t_{k+1}`` of an integer score, with their halfspaces."""
    from penn.algebra import PatternPartition, all_patterns

    pats = all_patterns(d)
    v = rng.integers(-3, 4, size=d).astype(float)
    score = pats @ v
    levels = np.unique(score)
    n_cuts = min(max_cells - 1, levels.size - 1)
    cuts = np.sort(rng.choice(levels[:-1], size=n_cuts, replace=False)) + 0.5 if n_cuts > 0 else np.array([])
    labels = np.searchsorted(cuts, score)
    halfspaces = []
    for k in range(cuts.size + 1):
        hs = []
        if k < cuts.size:
            hs.append((v.tolist(), float(cuts[k])))
        if k > 0:
            hs.append(((-v).tolist(), -float(cuts[k - 1])))
        if not hs:
            hs.append(([0.0] * d, 0.0))
        halfspaces.append(hs)
    return PatternPartition.from_labels([tuple(w) for w in pats], labels), halfspaces
