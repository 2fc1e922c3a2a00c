"""Figure rendering for the report path: PNGs written next to the CSVs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _new_axes(width: float = 5.5):
    fig, ax = plt.subplots(figsize=(width, width * _GOLDEN))
    return fig, ax


def save_roc_figure(report: MetricsReport, class_names: dict[int, str], path, title: str = "ROC") -> None:
    """One-vs-rest ROC curves for every class present in the report."""
    fig, ax = _new_axes()
    for class_id in sorted(report.roc_points):
        points = report.roc_points[class_id]
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        name = class_names.get(class_id, f"class {class_id}")
        auc = report.per_class_auc.get(class_id)
        label = f"{name} (AUC {auc:.3f})" if auc is not None else name
        ax.plot(xs, ys, label=label)
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(title)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_history_figure(history: list[dict], path) -> None:
    """Training loss and validation scores per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, ax = _new_axes()
    ax.plot(epochs, [h["train_loss"] for h in history], marker="o", label="train loss")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Train loss")
    twin = ax.twinx()
    twin.plot(
        epochs, [h["val_weighted_f1"] for h in history],
        marker="s", color="tab:orange", label="val weighted F1",
    )
    twin.set_ylabel("Validation weighted F1")
    twin.set_ylim(0.0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
