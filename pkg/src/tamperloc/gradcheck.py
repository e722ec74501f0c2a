"""Finite-difference verification of every differentiable op and module.

Each check rebuilds a scalar loss from a set of leaf tensors, runs the
tape backward, then perturbs leaf entries one at a time (central
differences, 64-bit) and compares. Ops are checked exhaustively over
every element; composed modules and the end-to-end network sample a
seeded subset of coordinates per leaf to stay fast.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ops, precision
from .tensor import Tensor
from . import tensor as T

__all__ = ["GradcheckResult", "check_gradients", "run_suite", "SCOPES"]

SCOPES = ("ops", "modules", "end2end", "all")


@dataclass
class GradcheckResult:
    name: str
    passed: bool
    max_rel_err: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"{status} {self.name}: max rel err {self.max_rel_err:.3e} ({self.seconds:.2f}s)"
        if not self.passed and self.detail:
            msg += f"\n     {self.detail}"
        return msg


def check_gradients(
    build,
    leaves: list[tuple[str, Tensor]],
    name: str,
    h: float = 1e-5,
    rtol: float = 1e-4,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradcheckResult:
    """Compare tape gradients of ``build()`` (a scalar) to central
    differences at every (or ``sample`` random) leaf coordinates."""
    if precision.get_precision() != "f64":
        raise RuntimeError("gradcheck requires 64-bit mode")
    t_start = time.time()
    for _, leaf in leaves:
        leaf.grad = None
    loss = build()
    loss.backward()
    analytic = {}
    for lname, leaf in leaves:
        if leaf.grad is None:
            raise AssertionError(f"{name}: no gradient reached leaf {lname!r}")
        analytic[lname] = leaf.grad.copy()

    # one scale for the whole check: the largest gradient this loss
    # produces anywhere; per-leaf scales misread the exactly-zero
    # gradients that normalization layers create (e.g. a bias ahead of
    # train-mode BN) as large relative errors
    scale = max(
        (float(np.abs(g).max()) for g in analytic.values()), default=0.0
    )
    scale = max(scale, 1e-8)

    worst = (0.0, "", -1, 0.0, 0.0)  # rel_err, leaf, index, analytic, numeric
    for lname, leaf in leaves:
        flat = leaf.data.reshape(-1)
        a_flat = analytic[lname].reshape(-1)
        n_el = flat.size
        if sample is not None and sample < n_el:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n_el, size=sample, replace=False)
        else:
            coords = range(n_el)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            lp = build().item()
            flat[idx] = orig - h
            lm = build().item()
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * h)
            denom = max(scale, abs(numeric), 1e-8)
            rel = abs(a_flat[idx] - numeric) / denom
            if rel > worst[0]:
                worst = (rel, lname, int(idx), float(a_flat[idx]), numeric)

    rel, lname, idx, a_val, n_val = worst
    detail = ""
    if rel >= rtol:
        detail = (
            f"worst element: leaf {lname!r} flat index {idx}, "
            f"analytic {a_val:.9e} vs numeric {n_val:.9e}"
        )
    return GradcheckResult(
        name=name,
        passed=rel < rtol,
        max_rel_err=rel,
        detail=detail,
        seconds=time.time() - t_start,
    )


def _leaf(rng, *shape, lo=None, margin=0.0):
    """Random leaf tensor; optionally keep values away from a kink at 0."""
    data = rng.normal(0.0, 1.0, size=shape)
    if margin > 0.0:
        data = np.where(np.abs(data) < margin, 2.0 * margin, data)
    if lo is not None:
        data = np.abs(data) + lo
    return Tensor(data, requires_grad=True)


# -- op-level suite ---------------------------------------------------------------


def _ops_checks(rng) -> list[GradcheckResult]:
    results = []

    def run(name, build, leaves):
        results.append(check_gradients(build, leaves, name))

    a = _leaf(rng, 3, 4)
    b = _leaf(rng, 3, 4)
    c = _leaf(rng, 4)  # broadcast partner
    run("add", lambda: ((a + b) * (a + c)).sum(), [("a", a), ("b", b), ("c", c)])
    run("mul", lambda: (a * b * c).sum(), [("a", a), ("b", b), ("c", c)])
    run("sub", lambda: ((a - b) * (a - c)).sum(), [("a", a), ("b", b), ("c", c)])
    d = _leaf(rng, 3, 4, lo=0.5)
    run("div", lambda: (a / d).sum(), [("a", a), ("d", d)])

    m1 = _leaf(rng, 2, 3, 4)
    m2 = _leaf(rng, 4, 5)
    run("matmul", lambda: ((m1 @ m2) ** 2).sum(), [("m1", m1), ("m2", m2)])

    p = _leaf(rng, 3, 3, lo=0.3)
    run("exp", lambda: T.exp(a * 0.3).sum(), [("a", a)])
    run("log", lambda: T.log(p).sum(), [("p", p)])
    run("sqrt", lambda: T.sqrt(p).sum(), [("p", p)])
    run("tanh", lambda: T.tanh(a).sum(), [("a", a)])
    run("power", lambda: T.power(p, 2.5).sum(), [("p", p)])
    cl = Tensor(rng.uniform(0.1, 0.9, (4, 4)), requires_grad=True)
    run("clamp", lambda: (T.clamp(cl, 0.05, 0.95) ** 2).sum(), [("cl", cl)])

    run("sum_axis", lambda: (a.sum(axis=0) ** 2).sum(), [("a", a)])
    run("mean_axes", lambda: (m1.mean(axis=(0, 2)) ** 2).sum(), [("m1", m1)])
    mix = Tensor(rng.normal(0, 1, (6, 6)))
    run("reshape", lambda: ((a.reshape(2, 6) @ mix) ** 2).sum(), [("a", a)])
    run(
        "transpose",
        lambda: ((m1.transpose(2, 0, 1) * 1.5) ** 2).sum(),
        [("m1", m1)],
    )

    x = _leaf(rng, 2, 3, 6, 6)
    w = _leaf(rng, 4, 3, 3, 3)
    bias = _leaf(rng, 4)
    run(
        "conv2d",
        lambda: (ops.conv2d(x, w, bias, stride=1, padding=1) ** 2).sum(),
        [("x", x), ("w", w), ("bias", bias)],
    )
    w2 = _leaf(rng, 2, 3, 3, 3)
    run(
        "conv2d_stride2",
        lambda: (ops.conv2d(x, w2, stride=2, padding=1) ** 2).sum(),
        [("x", x), ("w", w2)],
    )
    wd = _leaf(rng, 2, 3, 2, 2)
    run(
        "conv2d_dilated",
        lambda: (ops.conv2d(x, wd, dilation=2, padding=2) ** 2).sum(),
        [("x", x), ("w", wd)],
    )
    xg = _leaf(rng, 2, 4, 5, 5)
    wg = _leaf(rng, 4, 1, 3, 3)
    run(
        "conv2d_depthwise",
        lambda: (ops.conv2d(xg, wg, padding=1, groups=4) ** 2).sum(),
        [("x", xg), ("w", wg)],
    )

    for mode in ("zero", "replicate", "reflect"):
        xp = _leaf(rng, 1, 2, 4, 4)
        run(
            f"pad2d_{mode}",
            lambda xp=xp, mode=mode: (ops.pad2d(xp, 2, mode) ** 2).sum(),
            [("x", xp)],
        )

    xb = _leaf(rng, 2, 3, 4, 4)
    gamma = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    beta = _leaf(rng, 3)

    def bn_train():
        rm = np.zeros(3)
        rv = np.ones(3)
        return (
            ops.batch_norm(xb, gamma, beta, rm, rv, training=True) ** 2
        ).sum()

    run("batch_norm_train", bn_train, [("x", xb), ("gamma", gamma), ("beta", beta)])

    rm_fixed = rng.normal(0, 0.3, 3)
    rv_fixed = rng.uniform(0.5, 1.5, 3)
    run(
        "batch_norm_eval",
        lambda: (
            ops.batch_norm(xb, gamma, beta, rm_fixed, rv_fixed, training=False) ** 2
        ).sum(),
        [("x", xb), ("gamma", gamma), ("beta", beta)],
    )

    xl = _leaf(rng, 2, 5, 8)
    lg = Tensor(rng.uniform(0.5, 1.5, 8), requires_grad=True)
    lb = _leaf(rng, 8)
    run(
        "layer_norm",
        lambda: (ops.layer_norm(xl, lg, lb) ** 2).sum(),
        [("x", xl), ("gamma", lg), ("beta", lb)],
    )

    wl = _leaf(rng, 6, 8)
    bl = _leaf(rng, 6)
    run(
        "linear",
        lambda: (ops.linear(xl, wl, bl) ** 2).sum(),
        [("x", xl), ("w", wl), ("b", bl)],
    )

    run("sigmoid", lambda: (ops.sigmoid(a) ** 2).sum(), [("a", a)])
    ar = _leaf(rng, 3, 4, margin=0.05)  # keep away from the kink at 0
    run("relu", lambda: (ops.relu(ar) ** 2).sum(), [("a", ar)])
    ag = _leaf(rng, 16)
    run("gelu", lambda: (ops.gelu(ag) ** 2).sum(), [("a", ag)])
    sm_w = Tensor(rng.normal(0, 1, (2, 5, 8)))
    run("softmax", lambda: (ops.softmax(xl) * sm_w).sum(), [("x", xl)])

    c1 = _leaf(rng, 2, 3, 2, 2)
    c2 = _leaf(rng, 2, 5, 2, 2)
    run(
        "concat",
        lambda: (ops.concat([c1, c2], axis=1) ** 2).sum(),
        [("c1", c1), ("c2", c2)],
    )
    cs = _leaf(rng, 2, 2, 7, 1)

    def split_loss():
        p1, p2 = ops.split(cs, [3, 4], axis=2)
        return (p1**2).sum() + (p2**3).sum()

    run("split", split_loss, [("x", cs)])

    xpool = _leaf(rng, 2, 3, 4, 5)
    run("global_avg_pool", lambda: (ops.global_avg_pool(xpool) ** 2).sum(), [("x", xpool)])
    run(
        "horizontal_avg_pool",
        lambda: (ops.horizontal_avg_pool(xpool) ** 2).sum(),
        [("x", xpool)],
    )
    run(
        "vertical_avg_pool",
        lambda: (ops.vertical_avg_pool(xpool) ** 2).sum(),
        [("x", xpool)],
    )

    xu = _leaf(rng, 1, 2, 4, 4)
    run(
        "upsample_bilinear",
        lambda: (ops.upsample_bilinear(xu, 7, 9) ** 2).sum(),
        [("x", xu)],
    )
    run(
        "downsample_bilinear",
        lambda: (ops.upsample_bilinear(xu, 3, 2) ** 2).sum(),
        [("x", xu)],
    )
    return results


# -- module-level suite ----------------------------------------------------------


def _module_leaves(mod, limit=None):
    leaves = [(n, p) for n, p in mod.named_parameters()]
    if limit is not None:
        leaves = leaves[:limit]
    return leaves


def _modules_checks(rng) -> list[GradcheckResult]:
    from .decoder import MlpDecoder
    from .encoder import (
        EfficientSelfAttention,
        EncoderConfig,
        EncoderBranch,
        FeatureEnhancement,
        MixFeedForward,
        OverlapPatchEmbed,
        TransformerBlock,
    )
    from .fusion import CoordinateAttentionFusion
    from .losses import dice_loss, focal_loss
    from .module import init_parameters
    from .noise import extract_noise

    results = []

    def run(name, build, leaves, sample=24):
        results.append(
            check_gradients(build, leaves, name, sample=sample, rng=rng)
        )

    xn = Tensor(rng.random((1, 3, 8, 8)), requires_grad=True)
    run("noise_extract", lambda: (extract_noise(xn) ** 2).sum(), [("x", xn)])

    emb = OverlapPatchEmbed(3, 6, 7, 4)
    init_parameters(emb, 11)
    xe = Tensor(rng.normal(0, 1, (1, 3, 8, 8)), requires_grad=True)

    def embed_loss():
        tokens, _, _ = emb(xe)
        return (tokens**2).sum()

    run("patch_embed", embed_loss, [("x", xe)] + _module_leaves(emb))

    attn = EfficientSelfAttention(8, 2, sr_ratio=2)
    init_parameters(attn, 12)
    xa = Tensor(rng.normal(0, 1, (1, 16, 8)), requires_grad=True)
    run(
        "attention",
        lambda: (attn(xa, 4, 4) ** 2).sum(),
        [("x", xa)] + _module_leaves(attn),
    )

    ffn = MixFeedForward(6, 12)
    init_parameters(ffn, 13)
    xf = Tensor(rng.normal(0, 1, (1, 16, 6)), requires_grad=True)
    run(
        "mix_ffn", lambda: (ffn(xf, 4, 4) ** 2).sum(), [("x", xf)] + _module_leaves(ffn)
    )

    block = TransformerBlock(8, 2, sr_ratio=2, mlp_ratio=2)
    init_parameters(block, 14)
    xt = Tensor(rng.normal(0, 1, (1, 16, 8)), requires_grad=True)
    run(
        "transformer_block",
        lambda: (block(xt, 4, 4) ** 2).sum(),
        [("x", xt)] + _module_leaves(block),
    )

    fe = FeatureEnhancement(8, spatial_reduction=4, channel_reduction=4, dilation=2)
    init_parameters(fe, 15)
    fe.train()
    xfe = Tensor(rng.normal(0, 1, (2, 8, 5, 5)), requires_grad=True)
    run("feature_enhance", lambda: (fe(xfe) ** 2).sum(), [("x", xfe)] + _module_leaves(fe))

    caf = CoordinateAttentionFusion(4, reduction=2)
    init_parameters(caf, 16)
    caf.train()
    za = Tensor(rng.normal(0, 1, (2, 4, 3, 4)), requires_grad=True)
    zb = Tensor(rng.normal(0, 1, (2, 4, 3, 4)), requires_grad=True)
    run(
        "coord_fusion",
        lambda: (caf(za, zb) ** 2).sum(),
        [("z_rgb", za), ("z_noise", zb)] + _module_leaves(caf),
    )

    dec = MlpDecoder((4, 6), width=5)
    init_parameters(dec, 17)
    f1 = Tensor(rng.normal(0, 1, (1, 4, 4, 4)), requires_grad=True)
    f2 = Tensor(rng.normal(0, 1, (1, 6, 2, 2)), requires_grad=True)
    run(
        "decoder",
        lambda: (dec([f1, f2], 8, 8) ** 2).sum(),
        [("f1", f1), ("f2", f2)] + _module_leaves(dec),
    )

    pred = Tensor(rng.uniform(0.05, 0.95, (1, 1, 6, 6)), requires_grad=True)
    gt = Tensor((rng.random((1, 1, 6, 6)) > 0.5).astype(np.float64))
    run("dice_loss", lambda: dice_loss(pred, gt), [("pred", pred)])
    run("focal_loss", lambda: focal_loss(pred, gt), [("pred", pred)])

    branch_cfg = EncoderConfig(
        embed_dims=(4, 8, 16, 32),
        depths=(1, 1, 1, 1),
        num_heads=(1, 2, 4, 8),
        sr_ratios=(4, 2, 1, 1),
        mlp_ratio=2,
        in_channels=3,
        fe_spatial_reduction=4,
        fe_channel_reduction=4,
        fe_dilation=1,
    )
    branch = EncoderBranch(branch_cfg)
    init_parameters(branch, 18)
    branch.train()
    xb = Tensor(rng.normal(0, 0.5, (2, 3, 16, 16)), requires_grad=True)

    def branch_loss():
        feats = branch(xb)
        total = (feats[0] ** 2).sum()
        for f in feats[1:]:
            total = total + (f**2).sum()
        return total

    leaves = [("x", xb), ("embed0.w", dict(branch.named_parameters())["embeds.0.proj.weight"])]
    run("encoder_branch", branch_loss, leaves, sample=16)
    return results


# -- end-to-end -------------------------------------------------------------------


def _end2end_checks(rng) -> list[GradcheckResult]:
    from .losses import total_loss
    from .model import ModelConfig, build_model

    cfg = ModelConfig(
        embed_dims=(4, 8, 16, 32),
        depths=(1, 1, 1, 1),
        num_heads=(1, 2, 4, 8),
        sr_ratios=(4, 2, 1, 1),
        mlp_ratio=2,
        decoder_width=8,
        fe_spatial_reduction=4,
        fe_channel_reduction=4,
        fe_dilation=1,
    )
    model = build_model(cfg, seed=21)
    model.eval()  # running-stat BN keeps single-sample checks valid
    x = Tensor(rng.random((1, 3, 16, 16)), requires_grad=True)
    y = Tensor((rng.random((1, 1, 16, 16)) > 0.5).astype(np.float64))

    def loss():
        return total_loss(model(x), y)

    params = dict(model.named_parameters())
    leaves = [
        ("input", x),
        ("rgb.embeds.0.proj.weight", params["rgb.embeds.0.proj.weight"]),
        ("noise.embeds.0.proj.weight", params["noise.embeds.0.proj.weight"]),
        ("decoder.classifier.weight", params["decoder.classifier.weight"]),
    ]
    return [
        check_gradients(loss, leaves, "end2end_tiny", sample=8, rng=rng)
    ]


def run_suite(scope: str = "all", seed: int = 0) -> tuple[list[GradcheckResult], bool]:
    """Run the requested scope; returns (results, all_passed)."""
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    prev = precision.get_precision()
    precision.set_precision("f64")
    try:
        rng = np.random.default_rng(seed)
        results: list[GradcheckResult] = []
        if scope in ("ops", "all"):
            results += _ops_checks(rng)
        if scope in ("modules", "all"):
            results += _modules_checks(rng)
        if scope in ("end2end", "all"):
            results += _end2end_checks(rng)
    finally:
        precision.set_precision(prev)
    return results, all(r.passed for r in results)
