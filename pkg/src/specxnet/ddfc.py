"""Dual-domain feature coupler: channel split, local conv branch, spectral branch, cross paths."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import functional as F
from .nn import BatchNorm2d, Conv2d, ConvBnRelu, Module
from .tensor import Tensor, add, concat, split_channels


def global_channels(c: int, alpha: float) -> int:
    """``floor(alpha * c)``, evaluated exactly on the decimal value of ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return math.floor(Fraction(repr(float(alpha))) * c)


def split_sizes(c: int, alpha: float) -> tuple[int, int]:
    g = global_channels(c, alpha)
    return c - g, g


def split(x: Tensor, alpha: float) -> tuple[Tensor, Tensor]:
    """Local channels ``[0, C - floor(aC))`` and global channels ``[C - floor(aC), C)``."""
    n_local, _ = split_sizes(x.shape[1], alpha)
    return split_channels(x, n_local)


def _empty_like_spatial(x: Tensor) -> Tensor:
    n, _, h, w = x.shape
    return Tensor(np.zeros((n, 0, h, w), dtype=x.dtype))


class SpectralTransform(Module):
    """1x1 pre-stage, FFT modulation, inverse FFT, low-frequency residual, 1x1 post-stage.

    The modulation acts on real and imaginary parts stacked as ``2 * hidden`` channels:
    a 1x1 real convolution (or a per-bin gain when ``per_bin_size`` is given), then BN
    and ReLU, before the inverse transform.
    """

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, *, stride: int = 1,
                 lf_pool_ratio: float = 0.5, lf_crop_ratio: float = 0.5,
                 per_bin_size: tuple[int, int] | None = None,
                 bn_eps: float = 1e-5, bn_momentum: float = 0.1, dtype=np.float64):
        self.c_in, self.c_out = c_in, c_out
        self.hidden = max(1, c_out // 2)
        self.stride = stride
        self.lf_pool_ratio, self.lf_crop_ratio = lf_pool_ratio, lf_crop_ratio
        bn = dict(eps=bn_eps, momentum=bn_momentum, dtype=dtype)
        self.pre = ConvBnRelu(c_in, self.hidden, 1, rng, **bn)
        if per_bin_size is None:
            self.spectral_weight = Conv2d(2 * self.hidden, 2 * self.hidden, 1, rng, dtype=dtype)
            self.spectral_gain = None
        else:
            self.spectral_weight = None
            self.spectral_gain = Tensor(np.ones((self.hidden,) + tuple(per_bin_size), dtype=dtype),
                                        requires_grad=True)
        self.bn_spectral = BatchNorm2d(2 * self.hidden, **bn)
        self.post = Conv2d(self.hidden, c_out, 1, rng, dtype=dtype)

    def modulate(self, f: Tensor, bn: bool = True, activation: bool = True) -> Tensor:
        if self.spectral_weight is not None:
            m = self.spectral_weight(f)
        else:
            h = self.hidden
            gain = self.spectral_gain
            if gain.shape[1:] != f.shape[2:]:
                raise ValueError(f"per-bin spectral gain {gain.shape} does not match spectrum {f.shape}")
            re, im = split_channels(f, h)
            m = concat([F.elementwise_affine(re, gain), F.elementwise_affine(im, gain)], axis=1)
        if bn:
            m = self.bn_spectral(m)
        if activation:
            m = F.relu(m)
        return m

    def spectral_core(self, z: Tensor, bn: bool = True, activation: bool = True) -> Tensor:
        """FFT, modulation, inverse FFT. ``bn``/``activation`` switches exist for identity tests."""
        return F.ifft2_stacked(self.modulate(F.fft2_stacked(z), bn, activation))

    def low_frequency(self, z: Tensor) -> Tensor:
        h, w = z.shape[-2:]
        ph = max(1, int(h * self.lf_pool_ratio))
        pw = max(1, int(w * self.lf_pool_ratio))
        ch = max(1, int(ph * self.lf_crop_ratio))
        cw = max(1, int(pw * self.lf_crop_ratio))
        pooled = F.adaptive_avg_pool2d(z, ph, pw)
        spec = F.fftshift2d(F.fft2_stacked(pooled))
        # offsets keep the DC bin at index (ch // 2, cw // 2) of the crop
        spec = F.crop(spec, ph // 2 - ch // 2, pw // 2 - cw // 2, ch, cw)
        low = F.ifft2_stacked(F.ifftshift2d(spec)) * ((ch * cw) / (ph * pw))
        return F.bilinear_resize(low, h, w)

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[-2:]
        if min(h, w) < 2:
            raise ValueError(f"spectral transform needs spatial dims >= 2, got {(h, w)}")
        if self.stride > 1:
            x = F.adaptive_avg_pool2d(x, max(2, h // self.stride), max(2, w // self.stride))
        z = self.pre(x)
        y = self.post(self.spectral_core(z) + self.low_frequency(z))
        if self.stride > 1:
            y = F.bilinear_resize(y, h, w)
        return y


class DDFC(Module):
    """Four-path coupler: local->local, global->global (spectral), local->global, global->local."""

    def __init__(self, c_in: int, c_out: int, kernel: int, alpha: float, rng: np.random.Generator, *,
                 cross_paths: bool = True, spectral_stride: int = 1, lf_pool_ratio: float = 0.5,
                 lf_crop_ratio: float = 0.5, per_bin_size: tuple[int, int] | None = None,
                 bn_eps: float = 1e-5, bn_momentum: float = 0.1, dtype=np.float64):
        self.alpha = alpha
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.l_in, self.g_in = split_sizes(c_in, alpha)
        self.l_out, self.g_out = split_sizes(c_out, alpha)
        bn = dict(eps=bn_eps, momentum=bn_momentum, dtype=dtype)

        def conv(ci, co, enabled=True):
            return Conv2d(ci, co, kernel, rng, dtype=dtype) if enabled and ci and co else None

        self.local_to_local = conv(self.l_in, self.l_out)
        self.global_to_local = conv(self.g_in, self.l_out, cross_paths)
        self.local_to_global = conv(self.l_in, self.g_out, cross_paths)
        self.spectral = (SpectralTransform(self.g_in, self.g_out, rng, stride=spectral_stride,
                                           lf_pool_ratio=lf_pool_ratio, lf_crop_ratio=lf_crop_ratio,
                                           per_bin_size=per_bin_size, bn_eps=bn_eps,
                                           bn_momentum=bn_momentum, dtype=dtype)
                         if self.g_in and self.g_out else None)
        if self.l_out and not (self.local_to_local or self.global_to_local):
            raise ValueError(f"no path feeds the {self.l_out} local output channels "
                             f"(C_in={c_in}, alpha={alpha}, cross_paths={cross_paths})")
        if self.g_out and not (self.spectral or self.local_to_global):
            raise ValueError(f"no path feeds the {self.g_out} global output channels "
                             f"(C_in={c_in}, alpha={alpha}, cross_paths={cross_paths})")
        self.bn_local = BatchNorm2d(self.l_out, **bn) if self.l_out else None
        self.bn_global = BatchNorm2d(self.g_out, **bn) if self.g_out else None

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1] != self.c_in:
            raise ValueError(f"DDFC expects {self.c_in} channels, got input {x.shape}")
        x_local, x_global = split_channels(x, self.l_in)
        y_local = self._branch([(self.local_to_local, x_local), (self.global_to_local, x_global)],
                               self.bn_local, x)
        y_global = self._branch([(self.spectral, x_global), (self.local_to_global, x_local)],
                                self.bn_global, x)
        return y_local, y_global

    @staticmethod
    def _branch(paths, bn, x: Tensor) -> Tensor:
        if bn is None:
            return _empty_like_spatial(x)
        terms = [path(inp) for path, inp in paths if path is not None]
        total = terms[0]
        for t in terms[1:]:
            total = add(total, t)
        return F.relu(bn(total))
