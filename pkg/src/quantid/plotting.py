"""Static figures for experiment results (error decay, bound, costs, phase portraits)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PANEL_KEYS = (
    ("rel_err_A", r"$\|A-\hat A\|/\|A\|$"),
    ("rel_err_B", r"$\|B-\hat B\|/\|B\|$"),
    ("rho", r"bound $\rho$"),
)


def apply_style():
    plt.rcParams.update(
        {
            "font.size": 9,
            "axes.labelsize": 9,
            "axes.titlesize": 9,
            "legend.fontsize": 7,
            "xtick.direction": "in",
            "ytick.direction": "in",
            "axes.grid": True,
            "grid.alpha": 0.3,
            "lines.linewidth": 1.2,
            "svg.fonttype": "none",
            "svg.hashsalt": "quantid",
        }
    )


def _by_bits(rows, key):
    bits = sorted({r["bits"] for r in rows})
    vals = [np.array([r[key] for r in rows if r["bits"] == b and not math.isnan(r[key])]) for b in bits]
    return bits, vals


def plot_panels(rows, path, title: str = "") -> Path:
    """Four panels: relative errors of A and B, the bound rho, and costs, all against word-length."""
    apply_style()
    fig, axes = plt.subplots(1, 4, figsize=(12, 2.8))
    for ax, (key, label) in zip(axes, PANEL_KEYS):
        bits, vals = _by_bits(rows, key)
        for b, v in zip(bits, vals):
            if v.size:
                ax.semilogy([b] * v.size, v, ".", color="0.7", ms=2)
        means = [10 ** np.mean(np.log10(v[v > 0])) if np.any(v > 0) else np.nan for v in vals]
        ax.semilogy(bits, means, "o-", color="C0")
        ax.set_xlabel("word-length $b$")
        ax.set_ylabel(label)
    ax = axes[3]
    ok = [r for r in rows if r["status"] == "ok"]
    bits, gc = _by_bits(ok, "guaranteed_cost")
    _, fc = _by_bits(ok, "finite_cost")
    if bits:
        ax.semilogy(bits, [v.mean() if v.size else np.nan for v in gc], "s-", label="guaranteed cost", color="C3")
        ax.semilogy(bits, [v.mean() if v.size else np.nan for v in fc], "o--", label="finite-horizon cost", color="C2")
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no feasible synthesis", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("word-length $b$")
    ax.set_ylabel("cost")
    all_bits = sorted({r["bits"] for r in rows})
    for a in axes:
        a.set_xticks(all_bits)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def plot_phase_portraits(portraits: dict, bits, path, title: str = "") -> Path:
    """Closed-loop ``(x1, x2)`` trajectories, one panel per word-length."""
    apply_style()
    fig, axes = plt.subplots(1, len(bits), figsize=(3 * len(bits), 2.8), squeeze=False)
    for ax, b in zip(axes[0], bits):
        curves = [s for (rep, bb), s in sorted(portraits.items()) if bb == b]
        for s in curves:
            ax.plot(s[0], s[1], lw=0.6, alpha=0.6)
        if not curves:
            ax.text(0.5, 0.5, "no feasible controller", ha="center", va="center", transform=ax.transAxes)
        ax.set_title(f"b = {b}")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path
