"""Training objective: soft dice overlap plus focal cross-entropy.

Both losses consume probabilities (the network ends in a sigmoid) and
a strictly binary ground-truth mask, and reduce to one scalar per
batch: dice over the summed batch statistics, focal as the mean over
pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .tensor import Tensor

__all__ = ["LossConfig", "dice_loss", "focal_loss", "total_loss"]


@dataclass
class LossConfig:
    alpha: float = 0.5
    gamma: float = 2.0
    dice_epsilon: float = 1e-6
    log_epsilon: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.dice_epsilon <= 0.0:
            raise ValueError(f"dice_epsilon must be > 0, got {self.dice_epsilon}")


def _check_pair(pred: Tensor, gt: Tensor) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} must match")


def dice_loss(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """1 - 2*sum(p*y) / (sum(p^2) + sum(y^2)), smoothed on both sides."""
    _check_pair(pred, gt)
    eps = cfg.dice_epsilon
    inter = (pred * gt).sum()
    denom = (pred * pred).sum() + (gt * gt).sum()
    return 1.0 - (2.0 * inter + eps) / (denom + eps)


def focal_loss(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean over pixels of the class-weighted, hardness-focused
    cross-entropy: alpha*(1-p)^gamma for positives, (1-alpha)*p^gamma
    for negatives."""
    _check_pair(pred, gt)
    p = T.clamp(pred, cfg.log_epsilon, 1.0 - cfg.log_epsilon)
    pos = gt * T.power(1.0 - p, cfg.gamma) * T.log(p) * cfg.alpha
    neg = (1.0 - gt) * T.power(p, cfg.gamma) * T.log(1.0 - p) * (1.0 - cfg.alpha)
    return -(pos + neg).mean()


def total_loss(pred: Tensor, gt: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    return dice_loss(pred, gt, cfg) + focal_loss(pred, gt, cfg)
