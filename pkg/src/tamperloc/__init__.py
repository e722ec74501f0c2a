"""Image tampering localization: two-branch (RGB + noise residual)
transformer encoder with coordinate-attention fusion and an MLP
decoder, built on a self-contained numpy autodiff engine.
"""

from .precision import NumericalError, get_precision, set_precision
from .tensor import Tensor, no_grad
from .module import Module, Parameter, init_parameters
from .model import ModelConfig, TamperNet, build_model
from .losses import LossConfig, dice_loss, focal_loss, total_loss
from .metrics import MetricReport, f1_iou
from .noise import extract_noise
from .data import AugmentSpec, SynthSpec, augment, jpeg_roundtrip, synthesize_dataset
from .optim import AdamW, cosine_lr
from .train import TrainConfig, train
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import run_suite

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AugmentSpec",
    "LossConfig",
    "MetricReport",
    "ModelConfig",
    "Module",
    "NumericalError",
    "Parameter",
    "SynthSpec",
    "TamperNet",
    "Tensor",
    "TrainConfig",
    "augment",
    "build_model",
    "cosine_lr",
    "dice_loss",
    "extract_noise",
    "f1_iou",
    "focal_loss",
    "get_precision",
    "init_parameters",
    "jpeg_roundtrip",
    "load_checkpoint",
    "no_grad",
    "run_suite",
    "save_checkpoint",
    "set_precision",
    "synthesize_dataset",
    "total_loss",
    "train",
]
