"""Differentiable layer primitives on ``Tensor``.

Images are NCHW. Convolution is cross-correlation (no kernel flip).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import fft as _fft
from .tensor import Tensor, make_op, unbroadcast


# -- convolution -------------------------------------------------------------------

def _im2col(window, kh: int, kw: int, n: int, c: int, length: int) -> np.ndarray:
    """``[N, C*K*K, Ho*Wo]`` with rows ordered (channel, kernel row, kernel col)."""
    if kh == kw == 1:
        return np.ascontiguousarray(window(0, 0)).reshape(n, c, length)
    cols = np.stack([window(i, j) for i in range(kh) for j in range(kw)], axis=2)
    return cols.reshape(n, c * kh * kw, length)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, cg, kh, kw = weight.shape
    if c_in % groups or c_out % groups:
        raise ValueError(f"groups={groups} must divide C_in={c_in} and C_out={c_out}")
    if cg * groups != c_in:
        raise ValueError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape} (groups={groups})")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d yields empty output for input {x.shape}, kernel {weight.shape}, "
                         f"stride={stride}, padding={padding}")
    og = c_out // groups
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    wd = weight.data
    depthwise = groups == c_in and og == 1
    offsets = [(i, j) for i in range(kh) for j in range(kw)]

    def window(arr, i, j):
        return arr[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]

    if groups == 1:
        cols = _im2col(lambda i, j: window(xp, i, j), kh, kw, n, c_in, ho * wo)
        wmat = wd.reshape(c_out, c_in * kh * kw)
        out = (wmat @ cols).reshape(n, c_out, ho, wo)
    elif depthwise:
        out = np.zeros((n, c_out, ho, wo), dtype=x.dtype)
        for i, j in offsets:
            out += window(xp, i, j) * wd[None, :, 0, i, j, None, None]
    else:
        wg = wd.reshape(groups, og, cg, kh, kw)
        out = np.zeros((n, c_out, ho, wo), dtype=x.dtype)
        for i, j in offsets:
            xs = window(xp, i, j).reshape(n, groups, cg, ho * wo)
            out += (wg[None, :, :, :, i, j] @ xs).reshape(n, c_out, ho, wo)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        if groups == 1:
            gmat = g.reshape(n, c_out, ho * wo)
            if gw is not None:
                gw = (gmat @ np.swapaxes(cols, 1, 2)).sum(axis=0).reshape(wd.shape)
            if gxp is not None:
                gcols = (wmat.T @ gmat).reshape(n, c_in, kh, kw, ho, wo)
                for i, j in offsets:
                    window(gxp, i, j)[...] += gcols[:, :, i, j]
        elif depthwise:
            for i, j in offsets:
                if gw is not None:
                    gw[:, 0, i, j] = (g * window(xp, i, j)).sum(axis=(0, 2, 3))
                if gxp is not None:
                    window(gxp, i, j)[...] += g * wd[None, :, 0, i, j, None, None]
        else:
            gs = g.reshape(n, groups, og, ho * wo)
            for i, j in offsets:
                if gw is not None:
                    xs = window(xp, i, j).reshape(n, groups, cg, ho * wo)
                    gw[:, :, i, j] = (gs @ np.swapaxes(xs, -1, -2)).sum(axis=0).reshape(c_out, cg)
                if gxp is not None:
                    wt = np.swapaxes(wd.reshape(groups, og, cg, kh, kw)[:, :, :, i, j], -1, -2)
                    window(gxp, i, j)[...] += (wt[None] @ gs).reshape(n, c_in, ho, wo)
        gx = None
        if gxp is not None:
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, backward, "conv2d")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear dim mismatch: input {x.shape} vs weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, backward, "linear")


# -- normalization and activations ---------------------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """``gamma * (x - mu) / sqrt(var + eps) + beta`` per channel of an NCHW tensor.

    Training mode normalizes with biased batch statistics over N, H, W and folds them
    into the running buffers in place (unbiased variance, PyTorch convention).
    """
    if eps <= 0:
        raise ValueError(f"batch_norm eps must be positive, got {eps}")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    if m < 1:
        raise ValueError(f"batch_norm needs N*H*W >= 1, got shape {x.shape}")
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1) if m > 1 else 1.0)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    gd = gamma.data[None, :, None, None]
    out = gd * xhat + beta.data[None, :, None, None]

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            gxhat = g * gd
            if training:
                gx = (inv[None, :, None, None] / m) * (
                    m * gxhat - gxhat.sum(axis=axes, keepdims=True)
                    - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
            else:
                gx = gxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return make_op(out, (x, gamma, beta), backward, "batch_norm")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN, so a blown-up forward pass still reaches the loss check
    return make_op(np.maximum(x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the open interval: past |z| ~ 37 (float64) the exact value rounds to 0 or 1
    info = np.finfo(z.dtype)
    return np.clip(out, info.tiny, 1.0 - info.epsneg, out=out)


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)
    return make_op(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_op(s, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return make_op(out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),), "log_softmax")


# -- pooling and resampling ----------------------------------------------------------------

def max_pool2d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    stride = window if stride is None else stride
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ValueError(f"max_pool2d window {window} larger than input spatial dims {(h, w)}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    views = [x.data[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
             for i in range(window) for j in range(window)]
    stack = np.stack(views, axis=0)
    arg = stack.argmax(axis=0)  # first occurrence in row-major window order
    out = np.take_along_axis(stack, arg[None], axis=0)[0]

    def backward(g):
        gx = np.zeros_like(x.data)
        for k in range(window * window):
            i, j = divmod(k, window)
            gx[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += g * (arg == k)
        return (gx,)

    return make_op(out, (x,), backward, "max_pool2d")


@lru_cache(maxsize=None)
def _adaptive_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


@lru_cache(maxsize=None)
def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        lo = min(int(np.floor(src)), n_in - 1)
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def separable_map(x: Tensor, rows: np.ndarray, cols: np.ndarray, op: str) -> Tensor:
    """Apply ``rows @ X @ cols.T`` to every spatial plane."""
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    out = rows @ x.data @ cols.T
    return make_op(out, (x,), lambda g: (rows.T @ g @ cols,), op)


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"adaptive_avg_pool2d output must be >= 1, got {(out_h, out_w)}")
    h, w = x.shape[-2:]
    return separable_map(x, _adaptive_matrix(h, out_h), _adaptive_matrix(w, out_w), "adaptive_avg_pool2d")


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Half-pixel-centered bilinear resampling (align_corners=False)."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize output must be >= 1, got {(out_h, out_w)}")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x
    return separable_map(x, _bilinear_matrix(h, out_h), _bilinear_matrix(w, out_w), "bilinear_resize")


def crop(x: Tensor, top: int, left: int, out_h: int, out_w: int) -> Tensor:
    h, w = x.shape[-2:]
    if top < 0 or left < 0 or top + out_h > h or left + out_w > w:
        raise ValueError(f"crop window ({top},{left},{out_h},{out_w}) outside input {(h, w)}")
    shape, dtype = x.shape, x.dtype

    def backward(g):
        gx = np.zeros(shape, dtype=dtype)
        gx[..., top:top + out_h, left:left + out_w] = g
        return (gx,)

    return make_op(x.data[..., top:top + out_h, left:left + out_w].copy(), (x,), backward, "crop")


def center_crop(x: Tensor, out_h: int, out_w: int) -> Tensor:
    h, w = x.shape[-2:]
    if out_h > h or out_w > w:
        raise ValueError(f"center_crop target {(out_h, out_w)} exceeds input {(h, w)}")
    return crop(x, (h - out_h) // 2, (w - out_w) // 2, out_h, out_w)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: ``[N, C, H, W] -> [N, C]``."""
    n, c, h, w = x.shape
    if h * w < 1:
        raise ValueError(f"global_avg_pool needs H*W >= 1, got {x.shape}")
    return make_op(x.data.mean(axis=(2, 3)), (x,),
                   lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),), "gap")


def channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Broadcast ``[N, C]`` over the spatial grid of ``[N, C, H, W]``."""
    sd = s.data[:, :, None, None]
    xd = x.data

    def backward(g):
        return (g * sd if x.requires_grad else None,
                (g * xd).sum(axis=(2, 3)) if s.requires_grad else None)

    return make_op(xd * sd, (x, s), backward, "channel_scale")


def example_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each example of ``[N, ...]`` by the scalar ``s[n]``."""
    shape = (-1,) + (1,) * (x.ndim - 1)
    sd = s.data.reshape(shape)
    xd = x.data

    def backward(g):
        return (g * sd if x.requires_grad else None,
                (g * xd).reshape(len(xd), -1).sum(axis=1) if s.requires_grad else None)

    return make_op(xd * sd, (x, s), backward, "example_scale")


# -- spectral ------------------------------------------------------------------------------

def fft2_stacked(x: Tensor) -> Tensor:
    """Real ``[N, C, H, W]`` to ``[N, 2C, H, W]`` holding (real, imag) of the unnormalized 2D DFT."""
    c = x.shape[1]
    h, w = x.shape[-2:]
    z = _fft.fft2_array(x.data)
    out = np.concatenate([z.real, z.imag], axis=1).astype(x.dtype)

    def backward(g):
        gz = g[:, :c] + 1j * g[:, c:]
        return ((h * w) * _fft.ifft2_array(gz).real.astype(x.dtype),)

    return make_op(out, (x,), backward, "fft2")


def ifft2_stacked(y: Tensor) -> Tensor:
    """``[N, 2C, H, W]`` (real, imag) to the real part of the normalized inverse 2D DFT."""
    c2 = y.shape[1]
    if c2 % 2:
        raise ValueError(f"ifft2_stacked needs an even channel count, got {y.shape}")
    c = c2 // 2
    h, w = y.shape[-2:]
    z = _fft.ifft2_array(y.data[:, :c] + 1j * y.data[:, c:])
    out = z.real.astype(y.dtype)

    def backward(g):
        gz = _fft.fft2_array(g) / (h * w)
        return (np.concatenate([gz.real, gz.imag], axis=1).astype(y.dtype),)

    return make_op(out, (y,), backward, "ifft2")


def roll2d(x: Tensor, sh: int, sw: int) -> Tensor:
    return make_op(np.roll(x.data, (sh, sw), axis=(-2, -1)), (x,),
                   lambda g: (np.roll(g, (-sh, -sw), axis=(-2, -1)),), "roll2d")


def fftshift2d(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    return roll2d(x, h // 2, w // 2)


def ifftshift2d(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    return roll2d(x, -(h // 2), -(w // 2))


def elementwise_affine(x: Tensor, weight: Tensor) -> Tensor:
    """Broadcast multiply ``[N, C, H, W]`` by a ``[C, H, W]`` weight."""
    xd, wd = x.data, weight.data

    def backward(g):
        return (g * wd if x.requires_grad else None,
                unbroadcast(g * xd, wd.shape) if weight.requires_grad else None)

    return make_op(xd * wd, (x, weight), backward, "spectral_mul")
