"""Discrete Fourier transforms written from scratch.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey pass; every other
length goes through Bluestein's chirp-z reduction onto a power-of-two
convolution. All transforms act on the last axis and vectorize over the
leading ones. Forward is unnormalized, inverse carries the 1/N factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import Tensor


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(m // 2) / m)


def _fft_radix2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x[..., _bitrev(n)]
    m = 2
    while m <= n:
        y = y.reshape(*lead, n // m, m)
        even = y[..., : m // 2]
        odd = y[..., m // 2:] * _twiddles(m)
        y = np.concatenate([even + odd, even - odd], axis=-1)
        m *= 2
    return y.reshape(*lead, n)


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase accurate for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1
    while m < 2 * n - 1:
        m *= 2
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    return chirp, m, _fft_radix2(b)


def _fft_bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, m, b_hat = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft_pow2(_fft_radix2(a) * b_hat)
    return conv[..., :n] * chirp


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_radix2(np.conj(x))) / x.shape[-1]


def fft(x: np.ndarray) -> np.ndarray:
    """Unnormalized DFT along the last axis."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n == 0:
        return x.copy()
    if n == 1:
        return x.copy()
    if _is_pow2(n):
        return _fft_radix2(x)
    return _fft_bluestein(x)


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n == 0:
        return x.copy()
    return np.conj(fft(np.conj(x))) / n


def fft2_array(x: np.ndarray) -> np.ndarray:
    """2D DFT over the last two axes."""
    y = fft(x)
    return np.swapaxes(fft(np.swapaxes(y, -1, -2)), -1, -2)


def ifft2_array(x: np.ndarray) -> np.ndarray:
    y = ifft(x)
    return np.swapaxes(ifft(np.swapaxes(y, -1, -2)), -1, -2)


def dft2_direct(x: np.ndarray) -> np.ndarray:
    """O((HW)^2) direct summation; the reference every fast path is checked against."""
    x = np.asarray(x, dtype=complex)
    h, w = x.shape[-2:]
    eh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    ew = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    out = np.zeros_like(x)
    for u in range(h):
        for v in range(w):
            out[..., u, v] = np.sum(x * eh[u][:, None] * ew[v][None, :], axis=(-2, -1))
    return out


def shift_offsets(shape: tuple[int, ...]) -> tuple[int, int]:
    return shape[-2] // 2, shape[-1] // 2


def fftshift_array(x: np.ndarray) -> np.ndarray:
    return np.roll(x, shift_offsets(x.shape), axis=(-2, -1))


def ifftshift_array(x: np.ndarray) -> np.ndarray:
    sh, sw = shift_offsets(x.shape)
    return np.roll(x, (-sh, -sw), axis=(-2, -1))


@dataclass
class ComplexGrid:
    """Per-channel complex coefficients, stored as separate real and imaginary planes."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> ComplexGrid:
        return cls(z.real.copy(), z.imag.copy())

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.re, self.im)


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def fft2(x) -> ComplexGrid:
    """Forward 2D transform of a real ``[C, H, W]`` tensor (or any ``[..., H, W]`` array)."""
    return ComplexGrid.from_complex(fft2_array(_as_array(x)))


def ifft2(f: ComplexGrid) -> tuple[Tensor, float]:
    """Inverse 2D transform; returns the real part and the largest discarded imaginary magnitude."""
    z = ifft2_array(f.to_complex())
    residual = float(np.max(np.abs(z.imag))) if z.size else 0.0
    return Tensor(z.real.copy()), residual


def fftshift(f: ComplexGrid) -> ComplexGrid:
    return ComplexGrid(fftshift_array(f.re), fftshift_array(f.im))


def ifftshift(f: ComplexGrid) -> ComplexGrid:
    return ComplexGrid(ifftshift_array(f.re), ifftshift_array(f.im))


def log_magnitude_spectrum(x) -> Tensor:
    """Channel-mean of ``log(1 + |F|)`` on the centered spectrum, min-max scaled to [0, 1]."""
    arr = _as_array(x)
    if arr.ndim == 2:
        arr = arr[None]
    mag = fftshift(fft2(arr)).magnitude()
    spec = np.log1p(mag).mean(axis=0)
    lo, hi = spec.min(), spec.max()
    spec = (spec - lo) / (hi - lo) if hi > lo else np.zeros_like(spec)
    return Tensor(spec[None])
