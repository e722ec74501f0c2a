"""Pixel-level F1 and IoU over the tampered class, per image.

Predictions are binarized at a threshold; an image with an empty
ground truth and an empty prediction scores 1.0 on both metrics by
convention. Dataset numbers are means of per-image scores.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ImageScore", "MetricReport", "f1_iou", "score_image", "write_report"]


@dataclass
class ImageScore:
    tp: int
    fp: int
    fn: int
    f1: float
    iou: float


@dataclass
class MetricReport:
    threshold: float
    scores: list[ImageScore] = field(default_factory=list)

    @property
    def n_images(self) -> int:
        return len(self.scores)

    @property
    def mean_f1(self) -> float:
        return float(np.mean([s.f1 for s in self.scores])) if self.scores else 0.0

    @property
    def mean_iou(self) -> float:
        return float(np.mean([s.iou for s in self.scores])) if self.scores else 0.0


def score_image(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> ImageScore:
    """Score one soft prediction against one binary mask."""
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} must match")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0,1), got {threshold}")
    p = pred >= threshold
    y = gt > 0.5
    tp = int(np.count_nonzero(p & y))
    fp = int(np.count_nonzero(p & ~y))
    fn = int(np.count_nonzero(~p & y))
    if tp + fp + fn == 0:
        return ImageScore(0, 0, 0, 1.0, 1.0)
    f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    return ImageScore(tp, fp, fn, f1, iou)


def f1_iou(
    preds: np.ndarray | list[np.ndarray],
    gts: np.ndarray | list[np.ndarray],
    threshold: float = 0.5,
) -> MetricReport:
    """Batch or list of per-image masks -> per-image scores + means."""
    if isinstance(preds, np.ndarray) and preds.ndim >= 3:
        preds = list(preds.reshape(preds.shape[0], *preds.shape[-2:]))
        gts = list(gts.reshape(gts.shape[0], *gts.shape[-2:]))
    elif isinstance(preds, np.ndarray):
        preds, gts = [preds], [gts]
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    report = MetricReport(threshold=threshold)
    for p, y in zip(preds, gts):
        report.scores.append(score_image(np.asarray(p), np.asarray(y), threshold))
    return report


def write_report(
    report: MetricReport,
    out_dir: str | Path,
    dataset: str,
    names: list[str] | None = None,
    degraded: MetricReport | None = None,
    degrade_label: str = "",
) -> tuple[Path, Path]:
    """Write per-image JSON-lines and a one-row aggregate CSV.

    CSV columns are fixed: dataset,n,threshold,F1,IoU; a degraded
    rescore appends degrade,F1_degraded,IoU_degraded,F1_delta.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jsonl_path = out_dir / "per_image.jsonl"
    with open(jsonl_path, "w") as fh:
        for i, s in enumerate(report.scores):
            rec = {
                "index": i,
                "tp": s.tp,
                "fp": s.fp,
                "fn": s.fn,
                "f1": s.f1,
                "iou": s.iou,
            }
            if names is not None:
                rec["image"] = names[i]
            if degraded is not None:
                rec["f1_degraded"] = degraded.scores[i].f1
                rec["iou_degraded"] = degraded.scores[i].iou
            fh.write(json.dumps(rec) + "\n")
    csv_path = out_dir / "summary.csv"
    header = ["dataset", "n", "threshold", "F1", "IoU"]
    row = [
        dataset,
        report.n_images,
        report.threshold,
        f"{report.mean_f1:.6f}",
        f"{report.mean_iou:.6f}",
    ]
    if degraded is not None:
        header += ["degrade", "F1_degraded", "IoU_degraded", "F1_delta"]
        row += [
            degrade_label,
            f"{degraded.mean_f1:.6f}",
            f"{degraded.mean_iou:.6f}",
            f"{report.mean_f1 - degraded.mean_f1:.6f}",
        ]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerow(row)
    return jsonl_path, csv_path
