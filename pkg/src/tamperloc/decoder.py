"""MLP decoder: fused feature pyramid -> full-resolution soft mask.

Each scale is projected tokenwise to a shared width, upsampled to the
quarter-resolution grid, concatenated, mixed by one linear layer, and
classified to a single channel that is upsampled to the input size and
squashed to (0,1).
"""

from __future__ import annotations

from . import ops
from .module import Linear, Module, ModuleList
from .tensor import Tensor

__all__ = ["MlpDecoder"]


class MlpDecoder(Module):
    def __init__(self, in_channels: tuple[int, ...], width: int = 128):
        super().__init__()
        self.width = width
        self.proj = ModuleList(Linear(c, width) for c in in_channels)
        self.fuse = Linear(len(in_channels) * width, width)
        self.classifier = Linear(width, 1)

    def _project(self, f: Tensor, i: int) -> Tensor:
        n, c, h, w = f.shape
        tokens = f.reshape(n, c, h * w).transpose(0, 2, 1)  # [N, L, C]
        y = self.proj[i](tokens)  # [N, L, width]
        return y.transpose(0, 2, 1).reshape(n, self.width, h, w)

    def forward(self, pyramid: list[Tensor], out_h: int, out_w: int) -> Tensor:
        if len(pyramid) != len(self.proj):
            raise ValueError(
                f"decoder built for {len(self.proj)} scales, got {len(pyramid)}"
            )
        qh, qw = pyramid[0].shape[2], pyramid[0].shape[3]
        maps = []
        for i, f in enumerate(pyramid):
            y = self._project(f, i)
            if y.shape[2] != qh or y.shape[3] != qw:
                y = ops.upsample_bilinear(y, qh, qw)
            maps.append(y)
        merged = ops.concat(maps, axis=1)  # [N, 4*width, qh, qw]
        n, c, _, _ = merged.shape
        tokens = merged.reshape(n, c, qh * qw).transpose(0, 2, 1)
        tokens = self.fuse(tokens)
        logits = self.classifier(tokens)  # [N, L, 1]
        logits = logits.transpose(0, 2, 1).reshape(n, 1, qh, qw)
        logits = ops.upsample_bilinear(logits, out_h, out_w)
        return ops.sigmoid(logits)
