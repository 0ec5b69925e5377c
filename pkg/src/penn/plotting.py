"""Matplotlib figures written next to the tabular outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"PENN": "#1f77b4", "NN": "#d62728"}

# fixed salt and no timestamp keep SVG output byte-stable across runs
plt.rcParams["svg.hashsalt"] = "penn"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return path


def comparison_boxplot(comparisons: dict, path, ylabel: str = "excess risk", title: str = ""):
    """Box plots of the per-seed metric for each imputer, PENN next to NN.

    ``comparisons`` maps imputer name to a paired summary carrying
    ``penn``/``nn`` quartile dicts; whiskers span the observed range.
    """
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(comparisons), 3.6))
    stats, positions, colors = [], [], []
    for i, (kind, summary) in enumerate(comparisons.items()):
        for off, est in ((-0.2, "PENN"), (0.2, "NN")):
            q = summary[est.lower()]
            stats.append({"label": est, "med": q["median"], "q1": q["q1"], "q3": q["q3"],
                          "whislo": q["min"], "whishi": q["max"], "fliers": []})
            positions.append(i + off)
            colors.append(COLORS[est])
    boxes = ax.bxp(stats, positions=positions, widths=0.32, patch_artist=True, showfliers=False)
    for patch, c in zip(boxes["boxes"], colors):
        patch.set_facecolor(c)
        patch.set_alpha(0.55)
    ax.set_xticks(range(len(comparisons)))
    ax.set_xticklabels([k.upper() if len(k) < 5 else k for k in comparisons])
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    handles = [plt.Rectangle((0, 0), 1, 1, color=COLORS[e], alpha=0.55) for e in ("PENN", "NN")]
    ax.legend(handles, ["PENN", "NN"], frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def fitted_curves(z, omega, y, f_star, preds: dict, path):
    """Test responses and fitted values against the first covariate, one panel per estimator."""
    z = np.asarray(z)[:, 0]
    obs = np.asarray(omega)[:, 0].astype(bool)
    fig, axes = plt.subplots(1, len(preds), figsize=(4.2 * len(preds), 3.4), sharey=True, squeeze=False)
    for ax, (name, pred) in zip(axes[0], preds.items()):
        pred = np.asarray(pred).reshape(-1)
        ax.scatter(z[obs], y[obs], s=4, c="0.7", label="observed")
        ax.scatter(z[~obs], y[~obs], s=4, c="0.45", marker="x", label="missing (z = 0)")
        if f_star is not None:
            order = np.argsort(z[obs])
            ax.plot(z[obs][order], np.asarray(f_star)[obs][order], c="k", lw=1, label="Bayes")
        ax.scatter(z[obs], pred[obs], s=5, c=COLORS.get(name, "C0"), label=f"{name} fit")
        ax.scatter(z[~obs], pred[~obs], s=14, c=COLORS.get(name, "C0"), marker="D")
        ax.set_title(name)
        ax.set_xlabel("z")
    axes[0][0].set_ylabel("y")
    axes[0][0].legend(frameon=False, fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
