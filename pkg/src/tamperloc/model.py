"""Full network: noise extraction, two encoder branches, fusion, decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .decoder import MlpDecoder
from .encoder import EncoderBranch, EncoderConfig
from .fusion import FusionStack
from .module import Module, init_parameters
from .noise import HighPassFilterBank
from .tensor import Tensor

__all__ = ["ModelConfig", "TamperNet", "build_model"]


@dataclass
class ModelConfig:
    """Everything needed to rebuild the network shape from a checkpoint."""

    embed_dims: tuple[int, ...] = (32, 64, 160, 256)
    depths: tuple[int, ...] = (2, 2, 2, 2)
    num_heads: tuple[int, ...] = (1, 2, 5, 8)
    sr_ratios: tuple[int, ...] = (8, 4, 2, 1)
    mlp_ratio: int = 4
    decoder_width: int = 128
    use_fe: bool = True
    use_caf: bool = True
    fe_parallel: bool = False
    fe_spatial_reduction: int = 16
    fe_channel_reduction: int = 16
    fe_dilation: int = 4
    caf_reduction: int = 8

    def __post_init__(self):
        for name in ("embed_dims", "depths", "num_heads", "sr_ratios"):
            setattr(self, name, tuple(getattr(self, name)))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def branch_config(self, in_channels: int) -> EncoderConfig:
        return EncoderConfig(
            embed_dims=self.embed_dims,
            depths=self.depths,
            num_heads=self.num_heads,
            sr_ratios=self.sr_ratios,
            mlp_ratio=self.mlp_ratio,
            in_channels=in_channels,
            use_fe=self.use_fe,
            fe_parallel=self.fe_parallel,
            fe_spatial_reduction=self.fe_spatial_reduction,
            fe_channel_reduction=self.fe_channel_reduction,
            fe_dilation=self.fe_dilation,
        )


class TamperNet(Module):
    """RGB + noise-residual two-branch localization network.

    The two branches share architecture but no parameters; their
    pyramids are fused per scale and decoded to a soft mask the size of
    the input.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.hpf = HighPassFilterBank()
        self.rgb = EncoderBranch(cfg.branch_config(3))
        self.noise = EncoderBranch(cfg.branch_config(9))
        self.caf = FusionStack(
            cfg.embed_dims, enabled=cfg.use_caf, reduction=cfg.caf_reduction
        )
        self.decoder = MlpDecoder(
            tuple(2 * d for d in cfg.embed_dims), width=cfg.decoder_width
        )

    def forward(self, x: Tensor) -> Tensor:
        """Raw composition without the divisibility guard (tests use it
        at small odd sizes); prefer ``forward_full`` for real images."""
        residual = self.hpf(x)
        rgb_feats = self.rgb(x)
        noise_feats = self.noise(residual)
        fused = self.caf(rgb_feats, noise_feats)
        return self.decoder(fused, x.shape[2], x.shape[3])

    def forward_full(self, x: Tensor) -> Tensor:
        """Predict a soft mask [N,1,H,W] for [N,3,H,W] input in [0,1]."""
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected [N,3,H,W] input, got {x.shape}")
        h, w = x.shape[2], x.shape[3]
        if h % 32 or w % 32:
            raise ValueError(
                f"input {h}x{w} not divisible by 32; pad or resize first "
                "(inference pads reflectively and crops the output)"
            )
        return self.forward(x)


def build_model(cfg: ModelConfig, seed: int | None = None) -> TamperNet:
    model = TamperNet(cfg)
    if seed is not None:
        init_parameters(model, seed)
    return model
