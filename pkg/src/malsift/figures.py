"""Evaluation figures rendered to PNG files next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalRow
from .metrics import Metrics

__all__ = ["render_figures"]


def _metrics_bars(metrics: Metrics, path: Path) -> None:
    names = ["accuracy", "precision", "recall", "f1"]
    values = [metrics.accuracy, metrics.precision, metrics.recall, metrics.f1]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(names))
    heights = [v if v is not None else 0.0 for v in values]
    bars = ax.bar(xs, heights, color="#4878a8")
    for x, bar, value in zip(xs, bars, values):
        label = f"{value:.2f}" if value is not None else "n/a"
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 1, label,
                ha="center", va="bottom", fontsize=9)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names)
    ax.set_ylim(0, 110)
    ax.set_ylabel("percent")
    ax.set_title("Detection metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _confusion_matrix(metrics: Metrics, path: Path) -> None:
    counts = [[metrics.tp, metrics.fn], [metrics.fp, metrics.tn]]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(counts, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(counts[i][j]), ha="center", va="center", fontsize=14)
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["flagged malicious", "flagged benign"])
    ax.set_yticks([0, 1])
    ax.set_yticklabels(["malicious", "benign"])
    ax.set_ylabel("ground truth")
    ax.set_title("Confusion matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _similarity_histogram(rows: tuple[EvalRow, ...], path: Path) -> None:
    malicious = [r.top_sim for r in rows if r.status == "ok" and r.top_sim is not None
                 and r.label == "malicious"]
    benign = [r.top_sim for r in rows if r.status == "ok" and r.top_sim is not None
              and r.label == "benign"]
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = [i / 20 for i in range(21)]
    if malicious:
        ax.hist(malicious, bins=bins, alpha=0.6, label="malicious", color="#b5443e")
    if benign:
        ax.hist(benign, bins=bins, alpha=0.6, label="benign", color="#4878a8")
    if malicious or benign:
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no scored slices", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_xlabel("top-1 combined similarity")
    ax.set_ylabel("packages")
    ax.set_title("Top match similarity by ground truth")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(metrics: Metrics | None, rows: tuple[EvalRow, ...], out_dir: Path) -> list[Path]:
    """Write the evaluation figures; returns the created file paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    if metrics is not None:
        bars = out_dir / "metrics_bars.png"
        _metrics_bars(metrics, bars)
        created.append(bars)
        confusion = out_dir / "confusion_matrix.png"
        _confusion_matrix(metrics, confusion)
        created.append(confusion)
    histogram = out_dir / "similarity_hist.png"
    _similarity_histogram(rows, histogram)
    created.append(histogram)
    return created
