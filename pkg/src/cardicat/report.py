"""PNG figures written next to the tabular outputs of ``fit`` and ``evaluate``.

Figures are rendered with the Agg backend and stripped of the software
metadata chunk, so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fidelity import AGGREGATES, FidelityReport  # noqa: E402

PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)
    return path


def loss_curves(history, path: str | Path) -> Path:
    """One panel per loss component against the epoch."""
    epochs = history.column("epoch")
    names = ("total", "recon", "kl", "reg")
    fig, axes = plt.subplots(1, len(names), figsize=(12, 3))
    for ax, name in zip(axes, names):
        ax.plot(epochs, history.column(name), marker="." if len(epochs) < 30 else None)
        ax.set_title(name)
        ax.set_xlabel("epoch")
    fig.tight_layout()
    return _save(fig, Path(path))


def marginal_scores(report: FidelityReport, path: str | Path) -> Path:
    names = list(report.marginals)
    scores = [report.marginals[n]["score"] for n in names]
    colors = ["tab:blue" if report.marginals[n]["metric"] == "tvd" else "tab:orange"
              for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 3))
    ax.bar(np.arange(len(names)), scores, color=colors)
    ax.set_xticks(np.arange(len(names)), names, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("marginal fidelity (blue: 1-TVD, orange: 1-KS)")
    fig.tight_layout()
    return _save(fig, Path(path))


def aggregate_scores(report: FidelityReport, path: str | Path) -> Path:
    vals = [report.aggregates.get(k) for k in AGGREGATES]
    fig, ax = plt.subplots(figsize=(6, 3))
    x = np.arange(len(AGGREGATES))
    ax.bar(x, [np.nan if v is None else v for v in vals])
    ax.set_xticks(x, [k.replace("_", "\n") for k in AGGREGATES], fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_title("aggregate fidelity")
    fig.tight_layout()
    return _save(fig, Path(path))


def figure_paths(stem: str | Path) -> dict[str, Path]:
    """Figure files that accompany ``<stem>.csv``."""
    stem = Path(stem)
    return {"marginals": stem.with_name(stem.name + "_marginals.png"),
            "aggregates": stem.with_name(stem.name + "_aggregates.png")}


def write_evaluation_figures(report: FidelityReport, stem: str | Path) -> list[Path]:
    paths = figure_paths(stem)
    return [marginal_scores(report, paths["marginals"]),
            aggregate_scores(report, paths["aggregates"])]
