"""Training loop: cosine-scheduled AdamW over the dice+focal objective.

The whole trajectory is a pure function of (config, seed): one RNG
drives shuffling and augmentation in a fixed order, model init is
seeded, and all math is single-threaded numpy. A non-finite loss or
gradient halts the run, keeping the last good checkpoint on disk.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import precision
from .checkpoint import CheckpointData, apply_checkpoint, collect_entries, load_checkpoint, save_checkpoint
from .data import AugmentSpec, load_manifest, read_image, read_mask, augment
from .losses import LossConfig, total_loss
from .metrics import f1_iou
from .model import ModelConfig, build_model
from .optim import AdamW, cosine_lr
from .precision import NumericalError
from .tensor import Tensor, no_grad

__all__ = ["TrainConfig", "train", "predict_batch"]


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr_max: float = 5e-3
    lr_min: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    image_size: int = 64
    seed: int = 0
    checkpoint_interval: int = 50
    eval_interval: int = 20
    precision_mode: str = "f32"
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr_min > self.lr_max:
            raise ValueError(f"lr_min {self.lr_min} > lr_max {self.lr_max}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch statistics)")
        if self.image_size % 32:
            raise ValueError(f"image_size {self.image_size} must be divisible by 32")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_max": self.lr_max,
            "lr_min": self.lr_min,
            "betas": list(self.betas),
            "weight_decay": self.weight_decay,
            "image_size": self.image_size,
            "seed": self.seed,
            "checkpoint_interval": self.checkpoint_interval,
            "eval_interval": self.eval_interval,
            "precision_mode": self.precision_mode,
            "model": self.model.to_dict(),
            "loss": {
                "alpha": self.loss.alpha,
                "gamma": self.loss.gamma,
                "dice_epsilon": self.loss.dice_epsilon,
                "log_epsilon": self.loss.log_epsilon,
            },
            "augment": self.augment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        loss = LossConfig(**d.pop("loss", {}))
        aug = AugmentSpec.from_dict(d.pop("augment", {}))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(model=model, loss=loss, augment=aug, **d)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _load_pairs(data_dir: Path, manifest: list[dict]) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for rec in manifest:
        img = read_image(data_dir / rec["image"])
        msk = read_mask(data_dir / rec["mask"])
        pairs.append((img, msk))
    return pairs


def predict_batch(model, images: np.ndarray) -> np.ndarray:
    """Eval-mode forward on [N,3,H,W]; returns soft masks [N,1,H,W]."""
    was_training = model.training
    model.eval()
    with no_grad():
        pred = model.forward_full(Tensor(images))
    if was_training:
        model.train()
    return pred.data


def _batch_metrics(model, pairs, threshold=0.5):
    imgs = np.stack([p[0].transpose(2, 0, 1) for p in pairs])
    preds = predict_batch(model, imgs)
    gts = [p[1].astype(np.float64) for p in pairs]
    report = f1_iou([preds[i, 0] for i in range(len(pairs))], gts, threshold)
    return report.mean_f1, report.mean_iou


def train(cfg: TrainConfig, data_dir: str | Path, out_dir: str | Path):
    """Run the full loop; returns (model, history dict, checkpoint path)."""
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    precision.set_precision(cfg.precision_mode)
    precision.apply_env_override()

    manifest = load_manifest(data_dir / "manifest.jsonl")
    if not manifest:
        raise ValueError(f"empty manifest in {data_dir}")
    pairs = _load_pairs(data_dir, manifest)

    model = build_model(cfg.model, seed=cfg.seed)
    model.train()
    opt = AdamW(
        model.named_parameters(),
        lr=cfg.lr_max,
        betas=cfg.betas,
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.default_rng(cfg.seed)

    n = len(pairs)
    steps_per_epoch = max(1, n // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    history = {"loss": [], "lr": [], "eval": []}
    ckpt_path = out_dir / "model.ckpt"
    last_good = None
    step = 0

    def save_state(epoch):
        data = CheckpointData(
            model_config=cfg.model.to_dict(),
            epoch=epoch,
            step=opt.t,
            rng_state=rng.bit_generator.state,
            arrays=collect_entries(model, opt),
        )
        save_checkpoint(ckpt_path, data)

    t0 = time.time()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            if len(idx) == 0:
                continue
            while len(idx) < cfg.batch_size:  # wrap short tail batches
                idx = np.concatenate([idx, order[: cfg.batch_size - len(idx)]])
            imgs, msks = [], []
            for i in idx:
                img, msk = augment(
                    pairs[i][0], pairs[i][1], cfg.augment, rng, out_size=cfg.image_size
                )
                imgs.append(img.transpose(2, 0, 1))
                msks.append(msk[None].astype(np.float64))
            x = Tensor(np.stack(imgs))
            y = Tensor(np.stack(msks))

            pred = model.forward_full(x)
            loss = total_loss(pred, y, cfg.loss)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} step {step}; "
                    f"last good checkpoint: {last_good}"
                )
            model.zero_grad()
            loss.backward()
            lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)
            try:
                opt.step(lr=lr)
            except NumericalError as err:
                raise NumericalError(
                    f"{err} (epoch {epoch}, step {step}; "
                    f"last good checkpoint: {last_good})"
                ) from err
            history["loss"].append(loss_val)
            history["lr"].append(lr)
            step += 1

        if (epoch + 1) % cfg.eval_interval == 0 or epoch == cfg.epochs - 1:
            f1, iou = _batch_metrics(model, pairs)
            history["eval"].append({"epoch": epoch, "f1": f1, "iou": iou})
            print(
                f"epoch {epoch + 1}/{cfg.epochs} loss {loss_val:.4f} "
                f"f1 {f1:.4f} iou {iou:.4f}"
            )
        if (epoch + 1) % cfg.checkpoint_interval == 0 or epoch == cfg.epochs - 1:
            save_state(epoch)
            last_good = ckpt_path

    history["wall_seconds"] = time.time() - t0
    with open(out_dir / "history.json", "w") as fh:
        json.dump(history, fh, indent=1)
    return model, history, ckpt_path


def load_model_from_checkpoint(path: str | Path):
    """Rebuild a model (eval mode) from a checkpoint file."""
    data = load_checkpoint(path)
    model = build_model(ModelConfig.from_dict(data.model_config))
    apply_checkpoint(model, data)
    model.eval()
    return model, data
