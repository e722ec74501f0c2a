"""Figure rendering for training and evaluation runs.

Every CLI path that emits numbers also drops PNG figures next to them:
a loss/learning-rate curve for training, a metric summary bar chart for
evaluation, and an image/ground-truth/prediction panel for inference.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["loss_curve", "metrics_summary", "predictions_panel"]


def loss_curve(history: dict, out_path: str | Path) -> Path:
    """Per-step loss with the learning-rate schedule on a twin axis."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = np.arange(len(history["loss"]))
    ax.plot(steps, history["loss"], color="tab:blue", lw=1.0, label="total loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(steps, history["lr"], color="tab:orange", lw=1.0, alpha=0.7, label="lr")
    ax2.set_ylabel("learning rate")
    evals = history.get("eval", [])
    if evals:
        n_steps = len(history["loss"])
        n_epochs = max(e["epoch"] for e in evals) + 1
        per_epoch = max(n_steps // max(n_epochs, 1), 1)
        xs = [(e["epoch"] + 1) * per_epoch for e in evals]
        ax.plot(
            xs,
            [max(1e-6, 1.0 - e["f1"]) for e in evals],
            "s--",
            color="tab:green",
            ms=4,
            label="1 - F1",
        )
    ax.legend(loc="upper right", fontsize=8)
    fig.suptitle("Training loss and schedule")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def metrics_summary(
    report,
    out_path: str | Path,
    degraded=None,
    degrade_label: str = "",
) -> Path:
    """Mean F1/IoU bars plus the per-image score distribution."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))

    labels = ["F1", "IoU"]
    x = np.arange(2)
    width = 0.35 if degraded is not None else 0.6
    ax1.bar(x - (width / 2 if degraded is not None else 0),
            [report.mean_f1, report.mean_iou], width, label="clean",
            color="tab:blue")
    if degraded is not None:
        ax1.bar(x + width / 2, [degraded.mean_f1, degraded.mean_iou], width,
                label=degrade_label or "degraded", color="tab:red")
    ax1.set_xticks(x, labels)
    ax1.set_ylim(0, 1.05)
    ax1.set_title(f"dataset means (n={report.n_images}, thr={report.threshold})")
    ax1.legend(fontsize=8)
    ax1.grid(True, axis="y", alpha=0.3)

    f1s = [s.f1 for s in report.scores]
    ious = [s.iou for s in report.scores]
    ax2.hist([f1s, ious], bins=np.linspace(0, 1, 11), label=["F1", "IoU"],
             color=["tab:blue", "tab:cyan"])
    ax2.set_xlabel("per-image score")
    ax2.set_ylabel("images")
    ax2.set_title("score distribution")
    ax2.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def predictions_panel(
    rows: list[dict],
    out_path: str | Path,
    max_rows: int = 6,
) -> Path:
    """Grid: input image, ground truth (optional), soft mask, binary mask.

    Each row dict carries "image" [H,W,3], "pred" [H,W] in [0,1],
    optional "gt" [H,W], optional "name".
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = rows[:max_rows]
    has_gt = any("gt" in r for r in rows)
    ncols = 4 if has_gt else 3
    fig, axes = plt.subplots(
        len(rows), ncols, figsize=(2.2 * ncols, 2.2 * len(rows)), squeeze=False
    )
    col_titles = (
        ["image", "ground truth", "soft mask", "binary"]
        if has_gt
        else ["image", "soft mask", "binary"]
    )
    for j, t in enumerate(col_titles):
        axes[0][j].set_title(t, fontsize=9)
    for i, r in enumerate(rows):
        panels = [("image", r["image"], None)]
        if has_gt:
            panels.append(("gt", r.get("gt"), "gray"))
        panels.append(("pred", r["pred"], "magma"))
        panels.append(("bin", r["pred"] >= r.get("threshold", 0.5), "gray"))
        for j, (_, data, cmap) in enumerate(panels):
            ax = axes[i][j]
            ax.axis("off")
            if data is None:
                continue
            if cmap is None:
                ax.imshow(np.clip(data, 0, 1))
            else:
                ax.imshow(data, cmap=cmap, vmin=0, vmax=1)
        if r.get("name"):
            axes[i][0].set_ylabel(r["name"], fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
