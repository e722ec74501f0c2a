"""Coordinate-attention fusion of the RGB and noise feature pyramids.

Per scale: the two branch features are concatenated over channels, then
factorized row/column attention is computed from direction-aware
pooling. The pooled row and column profiles are joined along one
spatial axis, encoded through a shared 1x1 conv bottleneck, split back,
and decoded into per-row and per-column gates that multiply the
concatenated feature. One independent fusion module per scale.
"""

from __future__ import annotations

from . import ops
from .module import BatchNorm2d, Conv2d, Module, ModuleList
from .tensor import Tensor

__all__ = ["CoordinateAttentionFusion", "FusionStack"]


class CoordinateAttentionFusion(Module):
    """Fuse two same-scale [N,C,H,W] features into one [N,2C,H,W]."""

    def __init__(self, branch_channels: int, reduction: int = 8):
        super().__init__()
        c2 = 2 * branch_channels
        mid = max(c2 // reduction, 8)
        self.channels = c2
        self.mid = mid
        self.encode = Conv2d(c2, mid, 1)
        self.encode_bn = BatchNorm2d(mid)
        self.decode_h = Conv2d(mid, c2, 1)
        self.decode_w = Conv2d(mid, c2, 1)

    def pool(self, z: Tensor) -> tuple[Tensor, Tensor]:
        """Row profile [N,C,H,1] (average over width) and column
        profile [N,C,1,W] (average over height)."""
        return ops.horizontal_avg_pool(z), ops.vertical_avg_pool(z)

    def attend(self, z: Tensor) -> tuple[Tensor, Tensor]:
        """Per-row and per-column gates, each in (0,1)."""
        n, c, h, w = z.shape
        zh, zw = self.pool(z)
        zw_col = zw.transpose(0, 1, 3, 2)  # [N,C,W,1]
        joint = ops.concat([zw_col, zh], axis=2)  # [N,C,W+H,1]
        t = ops.sigmoid(self.encode_bn(self.encode(joint)))
        tw, th = ops.split(t, [w, h], axis=2)
        mh = ops.sigmoid(self.decode_h(th))  # [N,2C,H,1]
        mw = ops.sigmoid(self.decode_w(tw)).transpose(0, 1, 3, 2)  # [N,2C,1,W]
        return mh, mw

    def forward(self, z_rgb: Tensor, z_noise: Tensor) -> Tensor:
        if z_rgb.shape != z_noise.shape:
            raise ValueError(
                f"fusion inputs must match, got {z_rgb.shape} and {z_noise.shape}"
            )
        z = ops.concat([z_rgb, z_noise], axis=1)
        if z.shape[1] != self.channels:
            raise ValueError(
                f"fusion built for {self.channels} channels, got {z.shape[1]}"
            )
        mh, mw = self.attend(z)
        return z * mh * mw


class FusionStack(Module):
    """One fusion module per pyramid scale; passthrough when disabled."""

    def __init__(self, embed_dims: tuple[int, ...], enabled: bool = True, reduction: int = 8):
        super().__init__()
        self.enabled = enabled
        if enabled:
            self.scales = ModuleList(
                CoordinateAttentionFusion(d, reduction) for d in embed_dims
            )

    def forward(self, rgb_feats: list[Tensor], noise_feats: list[Tensor]) -> list[Tensor]:
        if len(rgb_feats) != len(noise_feats):
            raise ValueError("branch pyramids must have equal depth")
        if not self.enabled:
            return [
                ops.concat([a, b], axis=1) for a, b in zip(rgb_feats, noise_feats)
            ]
        return [
            self.scales[i](rgb_feats[i], noise_feats[i])
            for i in range(len(rgb_feats))
        ]
