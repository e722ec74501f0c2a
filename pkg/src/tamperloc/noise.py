"""Channel-wise high-pass filtering: RGB image -> 9-channel noise residual.

Three fixed residual kernels from the steganalysis literature (a
first-order horizontal difference, the 3x3 second-order "KB" kernel,
and the 5x5 "SQUARE" kernel), each applied to each color channel
independently. All three have zero coefficient sum, so any constant
image maps to exactly zero and only local inconsistencies survive.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .module import Module
from .tensor import Tensor

__all__ = ["HighPassFilterBank", "extract_noise", "hpf_kernels"]

# (kernel, divisor); defined on 0..255 pixel values
_FIRST_ORDER = (
    np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, -1.0, 1.0],
            [0.0, 0.0, 0.0],
        ]
    ),
    1.0,
)
_KB = (
    np.array(
        [
            [-1.0, 2.0, -1.0],
            [2.0, -4.0, 2.0],
            [-1.0, 2.0, -1.0],
        ]
    ),
    4.0,
)
_SQUARE = (
    np.array(
        [
            [-1.0, 2.0, -2.0, 2.0, -1.0],
            [2.0, -6.0, 8.0, -6.0, 2.0],
            [-2.0, 8.0, -12.0, 8.0, -2.0],
            [2.0, -6.0, 8.0, -6.0, 2.0],
            [-1.0, 2.0, -2.0, 2.0, -1.0],
        ]
    ),
    12.0,
)


def hpf_kernels() -> list[np.ndarray]:
    """The three normalized residual kernels, each padded to 5x5."""
    out = []
    for k, div in (_FIRST_ORDER, _KB, _SQUARE):
        k = k / div
        if k.shape[0] < 5:
            p = (5 - k.shape[0]) // 2
            k = np.pad(k, p)
        out.append(k)
    return out


def _bank_weight(dtype) -> np.ndarray:
    """Depthwise-style conv weight [9, 3, 5, 5]: out channel 3k+c reads
    input channel c through kernel k, all other taps zero."""
    w = np.zeros((9, 3, 5, 5), dtype=dtype)
    for k, kern in enumerate(hpf_kernels()):
        for c in range(3):
            w[3 * k + c, c] = kern
    return w


class HighPassFilterBank(Module):
    """Frozen 9-filter bank; holds no trainable parameters."""

    def __init__(self):
        super().__init__()
        self.register_buffer("kernel_bank", _bank_weight(np.float64))

    def forward(self, x: Tensor) -> Tensor:
        return extract_noise(x, self.kernel_bank)


def extract_noise(x: Tensor, bank: np.ndarray | None = None) -> Tensor:
    """[N,3,H,W] image in [0,1] -> [N,9,H,W] high-pass residual.

    Pixels are scaled to 0..255 first (the kernels are defined on
    integer pixel values); borders use edge replication so the output
    keeps the input's spatial size.
    """
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"extract_noise expects [N,3,H,W], got {x.shape}")
    if bank is None:
        bank = _bank_weight(np.float64)
    weight = Tensor(bank)  # constant: never receives gradients
    scaled = x * 255.0
    padded = ops.pad2d(scaled, 2, mode="replicate")
    return ops.conv2d(padded, weight, stride=1, padding=0)
