"""Network primitives on top of the autodiff tensor engine.

All 4-D ops take NCHW. Convolution is direct cross-correlation,
realized as a cached gather (im2col) plus one batched matmul so the
same code path serves plain, dilated, strided, and grouped kernels.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, from_op, unbroadcast

__all__ = [
    "conv2d",
    "pad2d",
    "batch_norm",
    "layer_norm",
    "linear",
    "sigmoid",
    "relu",
    "gelu",
    "softmax",
    "concat",
    "split",
    "global_avg_pool",
    "horizontal_avg_pool",
    "vertical_avg_pool",
    "upsample_bilinear",
    "conv_out_size",
]


# -- padding ---------------------------------------------------------------------


def pad2d(x: Tensor, pad: int, mode: str = "zero") -> Tensor:
    """Pad the two trailing spatial dims by ``pad`` on every side."""
    if pad == 0:
        return x
    if x.ndim != 4:
        raise ValueError(f"pad2d expects NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if mode == "zero":
        out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        out[:, :, pad : pad + h, pad : pad + w] = x.data

        def backward(g):
            return (g[:, :, pad : pad + h, pad : pad + w],)

        return from_op(out, (x,), backward, "pad2d")
    if mode in ("replicate", "reflect"):
        src = np.arange(-pad, h + pad)
        if mode == "replicate":
            iy = np.clip(src, 0, h - 1)
            ix = np.clip(np.arange(-pad, w + pad), 0, w - 1)
        else:
            iy = np.abs(src)
            iy = np.where(iy >= h, 2 * (h - 1) - iy, iy)
            ix = np.abs(np.arange(-pad, w + pad))
            ix = np.where(ix >= w, 2 * (w - 1) - ix, ix)
        out = x.data[:, :, iy[:, None], ix[None, :]]

        def backward(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, (slice(None), slice(None), iy[:, None], ix[None, :]), g)
            return (gx,)

        return from_op(out, (x,), backward, "pad2d")
    raise ValueError(f"unknown pad mode {mode!r}")


# -- convolution -------------------------------------------------------------------

_gather_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def conv_out_size(size: int, k: int, stride: int, pad: int, dilation: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _gather_indices(h, w, kh, kw, stride, pad, dilation):
    key = (h, w, kh, kw, stride, pad, dilation)
    cached = _gather_cache.get(key)
    if cached is not None:
        return cached
    ho = conv_out_size(h, kh, stride, pad, dilation)
    wo = conv_out_size(w, kw, stride, pad, dilation)
    if ho <= 0 or wo <= 0:
        raise ValueError(
            f"conv2d: kernel footprint k=({kh},{kw}) dilation={dilation} does not "
            f"fit input {h}x{w} with pad={pad}"
        )
    # ii/jj: padded-image row/col read by kernel tap (u,v) at output (i,j)
    u = np.arange(kh) * dilation
    v = np.arange(kw) * dilation
    i = np.arange(ho) * stride
    j = np.arange(wo) * stride
    ii = (u[:, None, None, None] + np.zeros((1, kw, 1, 1), int)) + i[None, None, :, None]
    jj = (v[None, :, None, None] + np.zeros((kh, 1, 1, 1), int)) + j[None, None, None, :]
    ii = np.broadcast_to(ii, (kh, kw, ho, wo)).copy()
    jj = np.broadcast_to(jj, (kh, kw, ho, wo)).copy()
    _gather_cache[key] = (ii, jj)
    return ii, jj


def _im2col(xpad: np.ndarray, kh, kw, stride, dilation, ho, wo):
    n, c, hp, wp = xpad.shape
    ii, jj = _gather_indices(hp - 0, wp - 0, kh, kw, stride, 0, dilation)
    cols = xpad[:, :, ii, jj]  # [N, C, kh, kw, ho, wo]
    return cols.reshape(n, c, kh * kw, ho * wo)


def _conv2d_input_grad(gcols, xpad_shape, kh, kw, stride, dilation, ho, wo):
    """Scatter column gradients back onto the padded input (col2im)."""
    n, c, hp, wp = xpad_shape
    ii, jj = _gather_indices(hp, wp, kh, kw, stride, 0, dilation)
    flat_idx = (ii * wp + jj).reshape(-1)  # [kh*kw*ho*wo]
    plane = hp * wp
    offsets = np.arange(n * c, dtype=np.int64) * plane
    idx_full = (offsets[:, None] + flat_idx[None, :]).reshape(-1)
    weights = gcols.reshape(n * c, -1).reshape(-1)
    acc = np.bincount(idx_full, weights=weights, minlength=n * c * plane)
    return acc.reshape(n, c, hp, wp)


def _conv2d_weight_grad(g_grouped, cols_grouped):
    # g: [N, G, Cog, L], cols: [N, G, K, L] -> [G, Cog, K]
    return np.einsum("ngol,ngkl->gok", g_grouped, cols_grouped)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    groups: int = 1,
) -> Tensor:
    """Cross-correlate ``x`` [N,C,H,W] with ``weight`` [C_out,C_in/groups,kH,kW]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}"
        )
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    n, c, h, w = x.shape
    c_out, c_g, kh, kw = weight.shape
    if c != c_g * groups or c_out % groups != 0:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape} "
            f"with groups={groups}"
        )
    ho = conv_out_size(h, kh, stride, padding, dilation)
    wo = conv_out_size(w, kw, stride, padding, dilation)
    if ho <= 0 or wo <= 0:
        raise ValueError(
            f"conv2d: input {h}x{w} too small for kernel ({kh},{kw}) "
            f"dilation={dilation} pad={padding}"
        )

    if padding > 0:
        xpad = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xpad[:, :, padding : padding + h, padding : padding + w] = x.data
    else:
        xpad = x.data
    cols = _im2col(xpad, kh, kw, stride, dilation, ho, wo)  # [N, C, K', L]
    g_dim = groups
    cog = c_out // groups
    k = c_g * kh * kw
    length = ho * wo
    cols_grouped = cols.reshape(n, g_dim, k, length)
    w_grouped = weight.data.reshape(g_dim, cog, k)
    out = np.matmul(w_grouped[None], cols_grouped)  # [N, G, Cog, L]
    out = out.reshape(n, c_out, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    xpad_shape = xpad.shape

    def backward(g):
        g_grouped = g.reshape(n, g_dim, cog, length)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = _conv2d_weight_grad(g_grouped, cols_grouped).reshape(weight.shape)
        if x.requires_grad:
            gcols = np.matmul(np.swapaxes(w_grouped, -1, -2)[None], g_grouped)
            gxpad = _conv2d_input_grad(
                gcols, xpad_shape, kh, kw, stride, dilation, ho, wo
            )
            if padding > 0:
                gx = gxpad[:, :, padding : padding + h, padding : padding + w]
            else:
                gx = gxpad
            gx = gx.astype(x.dtype, copy=False)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if bias is None:
            return gx, gw
        return gx, gw, gb

    return from_op(out, parents, backward, "conv2d")


# -- normalization ------------------------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over NCHW.

    Training mode uses batch statistics and updates the running buffers
    in place; eval mode normalizes with the running buffers.
    """
    if x.ndim != 4:
        raise ValueError(f"batch_norm expects NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    m = n * h * w
    if training:
        if m < 2:
            raise ValueError(
                "batch_norm in training mode needs N*H*W >= 2 per channel "
                f"(got N={n}, H={h}, W={w})"
            )
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))  # unbiased for the buffer
    else:
        mean = running_mean
        var = running_var
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * invstd.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    out = out.astype(x.dtype, copy=False)

    def backward(g):
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(1, c, 1, 1)
            if training:
                s1 = gxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (invstd.reshape(1, c, 1, 1) / m) * (
                    m * gxhat - s1 - xhat * s2
                )
            else:
                gx = gxhat * invstd.reshape(1, c, 1, 1)
            gx = gx.astype(x.dtype, copy=False)
        return gx, gg, gb

    return from_op(out, (x, gamma, beta), backward, "batch_norm")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last dim, then scale and shift."""
    d = x.shape[-1]
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * invstd
    out = xhat * gamma.data + beta.data

    def backward(g):
        gg = None
        gb = None
        if gamma.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data
            s1 = gxhat.sum(axis=-1, keepdims=True)
            s2 = (gxhat * xhat).sum(axis=-1, keepdims=True)
            gx = (invstd / d) * (d * gxhat - s1 - xhat * s2)
            gx = gx.astype(x.dtype, copy=False)
        return gx, gg, gb

    return from_op(out, (x, gamma, beta), backward, "layer_norm")


# -- linear / activations --------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last dim: x @ weight.T + bias, weight [D_out, D_in]."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"linear: input last dim {x.shape[-1]} != weight in-dim {weight.shape[1]}"
        )
    out = np.matmul(x.data, weight.data.T)
    if bias is not None:
        out = out + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)
    d_in = weight.shape[1]
    d_out = weight.shape[0]

    def backward(g):
        gx = gw = gb = None
        g2 = g.reshape(-1, d_out)
        if x.requires_grad:
            gx = np.matmul(g, weight.data).astype(x.dtype, copy=False)
        if weight.requires_grad:
            gw = np.matmul(g2.T, x.data.reshape(-1, d_in))
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        if bias is None:
            return gx, gw
        return gx, gw, gb

    return from_op(out, parents, backward, "linear")


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return from_op(out, (x,), backward, "sigmoid")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward(g):
        return (g * (x.data > 0),)

    return from_op(out, (x,), backward, "relu")


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh form)."""
    xd = x.data
    inner = _GELU_C * (xd + _GELU_A * xd**3)
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * xd * xd)
        d = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner
        return (g * d,)

    return from_op(out, (x,), backward, "gelu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last dim; rows sum to one."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return from_op(out, (x,), backward, "softmax")


# -- concat / split ----------------------------------------------------------------------


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            i != axis and a != b for i, (a, b) in enumerate(zip(t.shape, ref))
        ):
            raise ValueError(
                f"concat: shape {t.shape} incompatible with {ref} on axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    edges = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for i, t in enumerate(tensors):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(edges[i], edges[i + 1])
            grads.append(g[tuple(sl)] if t.requires_grad else None)
        return tuple(grads)

    return from_op(out, tuple(tensors), backward, "concat")


def split(x: Tensor, sizes: list[int], axis: int) -> tuple[Tensor, ...]:
    if sum(sizes) != x.shape[axis]:
        raise ValueError(
            f"split sizes {sizes} must sum to dim {x.shape[axis]} on axis {axis}"
        )
    outs = []
    start = 0
    for sz in sizes:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + sz)
        sl = tuple(sl)
        piece = x.data[sl]

        def backward(g, _sl=sl):
            gx = np.zeros_like(x.data)
            gx[_sl] = g
            return (gx,)

        outs.append(from_op(piece, (x,), backward, "split"))
        start += sz
    return tuple(outs)


# -- pooling ------------------------------------------------------------------------------


def _check_nchw(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{op} expects NCHW, got shape {x.shape}")


def global_avg_pool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C,1,1]; gradient spreads uniformly."""
    _check_nchw(x, "global_avg_pool")
    return x.mean(axis=(2, 3), keepdims=True)


def horizontal_avg_pool(x: Tensor) -> Tensor:
    """Average over width, one value per row: [N,C,H,W] -> [N,C,H,1]."""
    _check_nchw(x, "horizontal_avg_pool")
    return x.mean(axis=3, keepdims=True)


def vertical_avg_pool(x: Tensor) -> Tensor:
    """Average over height, one value per column: [N,C,H,W] -> [N,C,1,W]."""
    _check_nchw(x, "vertical_avg_pool")
    return x.mean(axis=2, keepdims=True)


# -- bilinear resize -----------------------------------------------------------------------

_interp_cache: dict[tuple, np.ndarray] = {}


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-interpolation matrix R [n_out, n_in]; half-pixel centers, no corner align."""
    key = (n_in, n_out, np.dtype(dtype).str)
    cached = _interp_cache.get(key)
    if cached is not None:
        return cached
    r = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = (src - i0).astype(dtype)
    np.add.at(r, (np.arange(n_out), i0), 1.0 - w1)
    np.add.at(r, (np.arange(n_out), i1), w1)
    _interp_cache[key] = r
    return r


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Separable bilinear resize of NCHW to (out_h, out_w)."""
    _check_nchw(x, "upsample_bilinear")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid target size ({out_h}, {out_w})")
    n, c, h, w = x.shape
    rh = _interp_matrix(h, out_h, x.dtype)
    rw = _interp_matrix(w, out_w, x.dtype)
    out = np.matmul(np.matmul(rh, x.data), rw.T)

    def backward(g):
        return (np.matmul(np.matmul(rh.T, g), rw),)

    return from_op(out, (x,), backward, "upsample_bilinear")
