"""Four-stage hierarchical transformer encoder, one instance per branch.

Each stage is an overlapped patch embedding followed by transformer
blocks (efficient self-attention with spatial reduction, then a
feed-forward with a 3x3 depthwise conv between the two linear maps).
Stage n emits a feature map at 1/2^(n+1) of the input resolution. A
feature-enhancement module sharpens the stage-3 output before it is
reported and (in the default serial wiring) fed to stage 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import ops
from .module import Conv2d, Identity, LayerNorm, Linear, Module, ModuleList
from .tensor import Tensor

__all__ = [
    "EncoderConfig",
    "OverlapPatchEmbed",
    "EfficientSelfAttention",
    "MixFeedForward",
    "TransformerBlock",
    "FeatureEnhancement",
    "EncoderBranch",
]

PATCH_STRIDES = (4, 2, 2, 2)


@dataclass
class EncoderConfig:
    """Per-branch shape hyperparameters; four entries per stage list."""

    embed_dims: tuple[int, ...] = (32, 64, 160, 256)
    depths: tuple[int, ...] = (2, 2, 2, 2)
    num_heads: tuple[int, ...] = (1, 2, 5, 8)
    sr_ratios: tuple[int, ...] = (8, 4, 2, 1)
    mlp_ratio: int = 4
    in_channels: int = 3
    use_fe: bool = True
    fe_parallel: bool = False
    fe_spatial_reduction: int = 16
    fe_channel_reduction: int = 16
    fe_dilation: int = 4

    def __post_init__(self):
        for name in ("embed_dims", "depths", "num_heads", "sr_ratios"):
            v = tuple(getattr(self, name))
            setattr(self, name, v)
            if len(v) != 4:
                raise ValueError(f"{name} must have 4 entries, got {v}")
        for d, h in zip(self.embed_dims, self.num_heads):
            if d % h:
                raise ValueError(f"embed dim {d} not divisible by heads {h}")


class OverlapPatchEmbed(Module):
    """Strided conv with overlapping windows, then layer norm on tokens."""

    def __init__(self, in_ch: int, embed_dim: int, kernel: int, stride: int):
        super().__init__()
        self.proj = Conv2d(in_ch, embed_dim, kernel, stride=stride, padding=kernel // 2)
        self.norm = LayerNorm(embed_dim)

    def forward(self, x: Tensor) -> tuple[Tensor, int, int]:
        y = self.proj(x)  # [N, D, H', W']
        n, d, h, w = y.shape
        tokens = y.reshape(n, d, h * w).transpose(0, 2, 1)  # [N, L, D]
        return self.norm(tokens), h, w


class EfficientSelfAttention(Module):
    """Multi-head self-attention; keys/values come from a spatially
    reduced copy of the feature map when sr_ratio > 1."""

    def __init__(self, dim: int, num_heads: int, sr_ratio: int):
        super().__init__()
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.sr_ratio = sr_ratio
        self.q = Linear(dim, dim)
        self.k = Linear(dim, dim)
        self.v = Linear(dim, dim)
        self.proj = Linear(dim, dim)
        if sr_ratio > 1:
            self.sr = Conv2d(dim, dim, sr_ratio, stride=sr_ratio)
            self.sr_norm = LayerNorm(dim)

    def forward(
        self, x: Tensor, h: int, w: int, return_weights: bool = False
    ):
        n, length, d = x.shape
        nh, hd = self.num_heads, self.head_dim
        q = self.q(x).reshape(n, length, nh, hd).transpose(0, 2, 1, 3)

        if self.sr_ratio > 1:
            grid = x.transpose(0, 2, 1).reshape(n, d, h, w)
            red = self.sr(grid)  # [N, D, h/sr, w/sr]
            lr = red.shape[2] * red.shape[3]
            red = red.reshape(n, d, lr).transpose(0, 2, 1)
            kv_in = self.sr_norm(red)
        else:
            kv_in = x
            lr = length
        k = self.k(kv_in).reshape(n, lr, nh, hd).transpose(0, 2, 1, 3)
        v = self.v(kv_in).reshape(n, lr, nh, hd).transpose(0, 2, 1, 3)

        logits = (q @ k.transpose(0, 1, 3, 2)) * self.scale  # [N, nh, L, Lr]
        attn = ops.softmax(logits)
        out = attn @ v  # [N, nh, L, hd]
        out = out.transpose(0, 2, 1, 3).reshape(n, length, d)
        out = self.proj(out)
        if return_weights:
            return out, attn
        return out


class MixFeedForward(Module):
    """Linear -> 3x3 depthwise conv (positional mixing) -> GELU -> linear."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = Linear(dim, hidden)
        self.dwconv = Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.fc2 = Linear(hidden, dim)
        self.hidden = hidden

    def forward(self, x: Tensor, h: int, w: int) -> Tensor:
        n, length, _ = x.shape
        y = self.fc1(x)  # [N, L, hidden]
        grid = y.transpose(0, 2, 1).reshape(n, self.hidden, h, w)
        grid = self.dwconv(grid)
        y = grid.reshape(n, self.hidden, length).transpose(0, 2, 1)
        y = ops.gelu(y)
        return self.fc2(y)


class TransformerBlock(Module):
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, dim: int, num_heads: int, sr_ratio: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = EfficientSelfAttention(dim, num_heads, sr_ratio)
        self.norm2 = LayerNorm(dim)
        self.ffn = MixFeedForward(dim, dim * mlp_ratio)

    def forward(self, x: Tensor, h: int, w: int) -> Tensor:
        x = x + self.attn(self.norm1(x), h, w)
        x = x + self.ffn(self.norm2(x), h, w)
        return x


class FeatureEnhancement(Module):
    """Two-path attention map over a feature block: a dilated-conv
    spatial path ([N,1,H,W]) and a squeeze-MLP channel path ([N,C,1,1]),
    summed with broadcasting, squashed, and applied as g * (1 + M)."""

    def __init__(
        self,
        channels: int,
        spatial_reduction: int = 16,
        channel_reduction: int = 16,
        dilation: int = 4,
    ):
        super().__init__()
        from .module import BatchNorm2d  # local to keep import graph flat

        mid_s = max(channels // spatial_reduction, 1)
        mid_c = max(channels // channel_reduction, 1)
        self.reduce = Conv2d(channels, mid_s, 1)
        self.dila1 = Conv2d(mid_s, mid_s, 3, padding=dilation, dilation=dilation)
        self.dila2 = Conv2d(mid_s, mid_s, 3, padding=dilation, dilation=dilation)
        self.collapse = Conv2d(mid_s, 1, 1)
        self.spatial_bn = BatchNorm2d(1)
        self.squeeze = Linear(channels, mid_c)
        self.expand = Linear(mid_c, channels)
        self.channel_bn = BatchNorm2d(channels)
        self.channels = channels

    def spatial_map(self, g: Tensor) -> Tensor:
        """Pre-activation spatial attention, one channel."""
        y = self.reduce(g)
        y = self.dila1(y)
        y = self.dila2(y)
        y = self.collapse(y)
        return self.spatial_bn(y)

    def channel_map(self, g: Tensor) -> Tensor:
        """Pre-activation channel attention at 1x1 spatial."""
        n = g.shape[0]
        pooled = ops.global_avg_pool(g).reshape(n, self.channels)
        y = self.squeeze(pooled)
        y = ops.relu(y)
        y = self.expand(y)
        y = y.reshape(n, self.channels, 1, 1)
        return self.channel_bn(y)

    def forward(self, g: Tensor) -> Tensor:
        m = ops.sigmoid(self.spatial_map(g) + self.channel_map(g))
        return g + g * m


class EncoderBranch(Module):
    """Four (patch embed, blocks) stages producing a feature pyramid."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        kernels = (7, 3, 3, 3)
        in_chs = (cfg.in_channels,) + tuple(cfg.embed_dims[:3])
        self.embeds = ModuleList(
            OverlapPatchEmbed(in_chs[i], cfg.embed_dims[i], kernels[i], PATCH_STRIDES[i])
            for i in range(4)
        )
        self.stages = ModuleList(
            ModuleList(
                TransformerBlock(
                    cfg.embed_dims[i], cfg.num_heads[i], cfg.sr_ratios[i], cfg.mlp_ratio
                )
                for _ in range(cfg.depths[i])
            )
            for i in range(4)
        )
        self.norms = ModuleList(LayerNorm(cfg.embed_dims[i]) for i in range(4))
        if cfg.use_fe:
            self.fe = FeatureEnhancement(
                cfg.embed_dims[2],
                spatial_reduction=cfg.fe_spatial_reduction,
                channel_reduction=cfg.fe_channel_reduction,
                dilation=cfg.fe_dilation,
            )
        else:
            self.fe = Identity()

    def forward(self, x: Tensor) -> list[Tensor]:
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(
                f"branch expects {self.cfg.in_channels} channels, got {x.shape[1]}"
            )
        feats: list[Tensor] = []
        cur = x
        for i in range(4):
            tokens, h, w = self.embeds[i](cur)
            for block in self.stages[i]:
                tokens = block(tokens, h, w)
            tokens = self.norms[i](tokens)
            n, _, d = tokens.shape
            grid = tokens.transpose(0, 2, 1).reshape(n, d, h, w)
            if i == 2 and self.cfg.use_fe:
                enhanced = self.fe(grid)
                feats.append(enhanced)
                cur = grid if self.cfg.fe_parallel else enhanced
            else:
                feats.append(grid)
                cur = grid
        return feats
