"""Figure rendering for report outputs.

Every report-producing command writes PNG figures next to its CSVs. All
figures use the Agg backend with fixed sizes and no timestamps, so reruns
with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def save_spectrum_figure(path: str, spectra: dict) -> None:
    """spectra: {metric_id: descending singular values}."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in sorted(spectra):
        vals = np.asarray(spectra[j], dtype=float)
        ax.plot(np.arange(1, len(vals) + 1), vals, marker="o", markersize=3, label=f"metric {j}")
    ax.set_yscale("log")
    ax.set_xlabel("component")
    ax.set_ylabel("singular value")
    ax.set_title("Singular values of effect matrices")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_bcv_figure(path: str, curves: dict, selected: dict) -> None:
    """curves: {metric_id: mean held-out error per rank}; selected: {metric_id: rank}."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in sorted(curves):
        errs = np.asarray(curves[j], dtype=float)
        ranks = np.arange(1, len(errs) + 1)
        (line,) = ax.plot(ranks, errs, marker="o", markersize=3, label=f"metric {j}")
        r = selected.get(j)
        if r is not None:
            ax.plot([r], [errs[r - 1]], marker="*", markersize=12, color=line.get_color())
    ax.set_yscale("log")
    ax.set_xlabel("candidate rank")
    ax.set_ylabel("held-out MSE")
    ax.set_title("Cross-validated rank selection (star = selected)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_correlation_figure(path: str, corr: np.ndarray, metric: int | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(corr, vmin=-1.0, vmax=1.0, cmap="RdBu_r", interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    title = "Effect correlations between experiments"
    if metric is not None:
        title += f" (metric {metric})"
    ax.set_title(title)
    ax.set_xlabel("experiment")
    ax.set_ylabel("experiment")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_risk_figure(path: str, per_metric: dict) -> None:
    """per_metric: {risk_name: {metric_id: value}}; empty inner dicts skipped."""
    names = [n for n, d in per_metric.items() if d]
    fig, ax = plt.subplots(figsize=(6, 4))
    metrics = sorted({j for n in names for j in per_metric[n]})
    width = 0.8 / max(len(names), 1)
    for i, name in enumerate(names):
        vals = [per_metric[name].get(j, np.nan) for j in metrics]
        ax.bar(np.arange(len(metrics)) + i * width, vals, width=width, label=name)
    ax.set_xticks(np.arange(len(metrics)) + 0.4 - width / 2)
    ax.set_xticklabels([str(j) for j in metrics])
    ax.set_xlabel("metric")
    ax.set_ylabel("risk")
    ax.set_title("Per-metric risks")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_loss_figure(path: str, losses) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, len(losses) + 1), losses)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_title("Training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
