"""Command-line surface: synth, train, infer, eval, gradcheck.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import precision
from .precision import NumericalError

USAGE_EXIT = 1
NUMERICAL_EXIT = 2
IO_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def build_parser() -> _Parser:
    p = _Parser(prog="tamperloc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic tampered-image dataset")
    sp.add_argument("--spec", required=True, help="JSON file of dataset settings")
    sp.add_argument("--out", required=True, help="output dataset directory")

    tp = sub.add_parser("train", help="train a model on a synthesized dataset")
    tp.add_argument("--config", required=True, help="JSON training config")
    tp.add_argument("--data", required=True, help="dataset directory with manifest.jsonl")
    tp.add_argument("--out", required=True, help="run output directory")
    tp.add_argument("--no-fe", action="store_true", help="ablation: drop feature enhancement")
    tp.add_argument("--no-caf", action="store_true", help="ablation: plain concat fusion")

    ip = sub.add_parser("infer", help="predict masks for images")
    ip.add_argument("--ckpt", required=True)
    ip.add_argument("--images", nargs="+", required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--threshold", type=float, default=0.5)

    ep = sub.add_parser("eval", help="score a checkpoint against a manifest")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--manifest", required=True)
    ep.add_argument("--out", default=None, help="report directory (default: <manifest dir>/eval)")
    ep.add_argument("--threshold", type=float, default=0.5)
    ep.add_argument(
        "--degrade",
        default=None,
        help="also score after degradation: jpeg:Q (quality) or resize:F (scale factor)",
    )

    gp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gp.add_argument("--scope", choices=["ops", "modules", "end2end", "all"], default="all")
    gp.add_argument("--seed", type=int, default=0)
    return p


# -- command bodies --------------------------------------------------------------


def cmd_synth(args) -> int:
    from .data import SynthSpec, synthesize_dataset

    spec_path = Path(args.spec)
    if not spec_path.exists():
        print(f"error: spec file not found: {spec_path}", file=sys.stderr)
        return IO_EXIT
    try:
        spec = SynthSpec.from_dict(json.loads(spec_path.read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as err:
        print(f"error: bad spec: {err}", file=sys.stderr)
        return USAGE_EXIT
    manifest = synthesize_dataset(spec, args.out)
    n = sum(1 for _ in open(manifest))
    print(f"wrote {n} samples under {args.out} (manifest: {manifest})")
    return 0


def cmd_train(args) -> int:
    from .report import loss_curve
    from .train import TrainConfig, train

    config_path = Path(args.config)
    if not config_path.exists():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return IO_EXIT
    try:
        cfg = TrainConfig.from_dict(json.loads(config_path.read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as err:
        print(f"error: bad config: {err}", file=sys.stderr)
        return USAGE_EXIT
    if args.no_fe:
        cfg.model.use_fe = False
    if args.no_caf:
        cfg.model.use_caf = False
    data_dir = Path(args.data)
    if not (data_dir / "manifest.jsonl").exists():
        print(f"error: no manifest.jsonl in {data_dir}", file=sys.stderr)
        return IO_EXIT
    _, history, ckpt = train(cfg, data_dir, args.out)
    fig = loss_curve(history, Path(args.out) / "loss_curve.png")
    print(f"checkpoint: {ckpt}")
    print(f"figure: {fig}")
    return 0


def _pad_to_32(img: np.ndarray) -> tuple[np.ndarray, int, int]:
    h, w = img.shape[:2]
    ph = (32 - h % 32) % 32
    pw = (32 - w % 32) % 32
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "edge"
        img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode=mode)
    return img, h, w


def _predict_one(model, img: np.ndarray) -> np.ndarray:
    from .train import predict_batch

    padded, h, w = _pad_to_32(img)
    pred = predict_batch(model, padded.transpose(2, 0, 1)[None])
    return pred[0, 0, :h, :w]


def cmd_infer(args) -> int:
    from PIL import Image

    from .report import predictions_panel
    from .train import load_model_from_checkpoint

    precision.set_precision("f32")
    precision.apply_env_override()
    try:
        model, _ = load_model_from_checkpoint(args.ckpt)
    except (OSError, ValueError, KeyError) as err:
        print(f"error: cannot load checkpoint: {err}", file=sys.stderr)
        return IO_EXIT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    panel_rows = []
    for path in args.images:
        path = Path(path)
        try:
            img = np.asarray(Image.open(path).convert("RGB")).astype(np.float64) / 255.0
        except OSError as err:
            print(f"error: skipping unreadable image {path}: {err}", file=sys.stderr)
            failures += 1
            continue
        pred = _predict_one(model, img)
        soft = (pred * 255.0).round().astype(np.uint8)
        hard = np.where(pred >= args.threshold, 255, 0).astype(np.uint8)
        Image.fromarray(soft).save(out_dir / f"{path.stem}_soft.png")
        Image.fromarray(hard).save(out_dir / f"{path.stem}_mask.png")
        panel_rows.append(
            {"image": img, "pred": pred, "threshold": args.threshold, "name": path.stem}
        )
        print(f"{path} -> {out_dir / (path.stem + '_mask.png')}")
    if panel_rows:
        fig = predictions_panel(panel_rows, out_dir / "predictions_panel.png")
        print(f"figure: {fig}")
    return IO_EXIT if failures else 0


def _parse_degrade(text: str):
    kind, _, value = text.partition(":")
    if kind == "jpeg":
        q = int(value)
        if not 10 <= q <= 100:
            raise ValueError(f"jpeg quality must be in [10,100], got {q}")
        return ("jpeg", q)
    if kind == "resize":
        f = float(value)
        if not 0.1 <= f <= 2.0:
            raise ValueError(f"resize factor must be in [0.1,2], got {f}")
        return ("resize", f)
    raise ValueError(f"degrade must be jpeg:Q or resize:F, got {text!r}")


def _degrade_image(img: np.ndarray, spec) -> np.ndarray:
    from PIL import Image

    from .data import jpeg_roundtrip

    kind, value = spec
    if kind == "jpeg":
        return jpeg_roundtrip(img, value)
    h, w = img.shape[:2]
    nh, nw = max(int(round(h * value)), 8), max(int(round(w * value)), 8)
    pil = Image.fromarray((img * 255).round().astype(np.uint8))
    small = pil.resize((nw, nh), Image.BILINEAR).resize((w, h), Image.BILINEAR)
    return np.asarray(small).astype(np.float64) / 255.0


def cmd_eval(args) -> int:
    from .data import load_manifest, read_image, read_mask
    from .metrics import f1_iou, write_report
    from .report import metrics_summary, predictions_panel
    from .train import load_model_from_checkpoint

    precision.set_precision("f32")
    precision.apply_env_override()
    degrade = None
    if args.degrade:
        try:
            degrade = _parse_degrade(args.degrade)
        except ValueError as err:
            print(f"error: {err}", file=sys.stderr)
            return USAGE_EXIT
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        print(f"error: manifest not found: {manifest_path}", file=sys.stderr)
        return IO_EXIT
    try:
        model, _ = load_model_from_checkpoint(args.ckpt)
    except (OSError, ValueError, KeyError) as err:
        print(f"error: cannot load checkpoint: {err}", file=sys.stderr)
        return IO_EXIT
    records = load_manifest(manifest_path)
    base = manifest_path.parent
    out_dir = Path(args.out) if args.out else base / "eval"

    preds, gts, names, panel_rows = [], [], [], []
    degraded_preds = []
    skipped = 0
    for rec in records:
        try:
            img = read_image(base / rec["image"])
            gt = read_mask(base / rec["mask"])
        except OSError as err:
            print(f"warning: skipping {rec['image']}: {err}", file=sys.stderr)
            skipped += 1
            continue
        if img.shape[:2] != gt.shape:
            print(
                f"warning: skipping {rec['image']}: image {img.shape[:2]} vs "
                f"mask {gt.shape}",
                file=sys.stderr,
            )
            skipped += 1
            continue
        pred = _predict_one(model, img)
        preds.append(pred)
        gts.append(gt.astype(np.float64))
        names.append(rec["image"])
        if len(panel_rows) < 6:
            panel_rows.append(
                {"image": img, "gt": gt.astype(float), "pred": pred,
                 "threshold": args.threshold, "name": Path(rec["image"]).stem}
            )
        if degrade is not None:
            degraded_preds.append(_predict_one(model, _degrade_image(img, degrade)))
    if not preds:
        print("error: no scorable samples in manifest", file=sys.stderr)
        return IO_EXIT

    report = f1_iou(preds, gts, args.threshold)
    degraded_report = (
        f1_iou(degraded_preds, gts, args.threshold) if degrade is not None else None
    )
    label = args.degrade or ""
    jsonl_path, csv_path = write_report(
        report, out_dir, dataset=base.name, names=names,
        degraded=degraded_report, degrade_label=label,
    )
    fig = metrics_summary(
        report, out_dir / "metrics_summary.png",
        degraded=degraded_report, degrade_label=label,
    )
    panel = predictions_panel(panel_rows, out_dir / "predictions_panel.png")
    print(f"n={report.n_images} threshold={report.threshold} "
          f"F1={report.mean_f1:.4f} IoU={report.mean_iou:.4f}")
    if degraded_report is not None:
        print(
            f"degraded({label}): F1={degraded_report.mean_f1:.4f} "
            f"IoU={degraded_report.mean_iou:.4f} "
            f"delta={report.mean_f1 - degraded_report.mean_f1:+.4f}"
        )
    print(f"reports: {jsonl_path}, {csv_path}")
    print(f"figures: {fig}, {panel}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results, ok = run_suite(scope=args.scope, seed=args.seed)
    for r in results:
        print(r.line())
    total = sum(r.seconds for r in results)
    print(f"{'all checks passed' if ok else 'FAILURES PRESENT'} "
          f"({len(results)} checks, {total:.1f}s)")
    return 0 if ok else NUMERICAL_EXIT


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_EXIT
    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "infer": cmd_infer,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return NUMERICAL_EXIT
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
