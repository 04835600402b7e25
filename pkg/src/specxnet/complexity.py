"""Analytic parameter/FLOP accounting, walked parameter counts and a wall-clock micro-benchmark.

FLOP convention: one multiply-accumulate counts as one FLOP. Analytic rows are exact
``Fraction`` evaluations of the closed forms; biases and BN affine terms are not part of
them but are reported by :func:`walked_params`.
"""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .backbone import BaselineBlock, SFBlock
from .config import BlockConfig, ModelConfig
from .ddfc import DDFC, SpectralTransform, split_sizes
from .nn import Module
from .tensor import Tensor, no_grad

ROWS = ("baseline", "local_to_local", "spectral", "local_to_global", "global_to_local", "dfa")
DDFC_ROWS = ROWS[1:5]


def _frac(alpha) -> Fraction:
    return alpha if isinstance(alpha, Fraction) else Fraction(repr(float(alpha)))


@dataclass
class ComplexityReport:
    """Per-path rows plus the closed-form total; ``residual`` is total minus the row sum."""

    c1: int
    c2: int
    k: int
    alpha: Fraction
    h: int | None = None
    w: int | None = None
    params: dict[str, Fraction] = field(default_factory=dict)
    flops: dict[str, Fraction] = field(default_factory=dict)

    @staticmethod
    def _residual(rows: dict[str, Fraction]) -> Fraction | None:
        if not rows:
            return None
        return rows["total"] - sum(rows[r] for r in ROWS[1:])

    @property
    def param_residual(self) -> Fraction | None:
        return self._residual(self.params)

    @property
    def flop_residual(self) -> Fraction | None:
        return self._residual(self.flops)

    def ddfc_params(self) -> Fraction:
        return sum(self.params[r] for r in DDFC_ROWS)

    def table(self, fmt: str = "text") -> str:
        cols = [c for c, rows in (("params", self.params), ("flops", self.flops)) if rows]
        names = list(ROWS) + ["total"]
        out = []
        echo = f"C1={self.c1} C2={self.c2} K={self.k} alpha={self.alpha}"
        if self.h is not None:
            echo += f" H={self.h} W={self.w}"
        if fmt == "csv":
            out.append(",".join(["row"] + cols))
            for n in names:
                out.append(",".join([n] + [_num(getattr(self, c)[n]) for c in cols]))
        else:
            out.append(f"# {echo}")
            out.append(f"{'row':<16}" + "".join(f"{c:>20}" for c in cols))
            for n in names:
                out.append(f"{n:<16}" + "".join(f"{_num(getattr(self, c)[n]):>20}" for c in cols))
        for c, res in (("params", self.param_residual), ("flops", self.flop_residual)):
            if res is not None and res != 0:
                out.append(f"# WARNING: {c} total differs from the row sum by {_num(res)}")
        return "\n".join(out)


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{float(x):.6g}"


def analytic_params(c1: int, c2: int, k: int, alpha) -> ComplexityReport:
    if min(c1, c2, k) < 1:
        raise ValueError(f"C1, C2, K must be >= 1, got {(c1, c2, k)}")
    a = _frac(alpha)
    if not 0 <= a <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    dense = Fraction(c1 * c2 * k * k)
    half, three_half = Fraction(1, 2), Fraction(3, 2)
    p = {
        "baseline": dense,
        "local_to_local": (1 - a) ** 2 * dense,
        "spectral": a ** 2 * c2 * (half * c1 + three_half * c2),
        "local_to_global": a * (1 - a) * dense,
        "global_to_local": a * (1 - a) * dense,
        "dfa": Fraction(2 * (c1 + c2) ** 2),
    }
    p["total"] = ((1 - a ** 2) * dense + a ** 2 * c2 * (half * c1 + three_half * c2)
                  + 2 * (c1 + c2) ** 2)
    return ComplexityReport(c1, c2, k, a, params=p)


def analytic_flops(c1: int, c2: int, h: int, w: int, k: int, alpha) -> ComplexityReport:
    if min(h, w) < 1:
        raise ValueError(f"H, W must be >= 1, got {(h, w)}")
    rep = analytic_params(c1, c2, k, alpha)
    a, hw = rep.alpha, h * w
    dense = Fraction(c1 * c2 * k * k * hw)
    half, thirteen_16 = Fraction(1, 2), Fraction(13, 16)
    f = {
        "baseline": dense,
        "local_to_local": (1 - a) ** 2 * dense,
        "spectral": a ** 2 * c2 * hw * (half * c1 + thirteen_16 * c2),
        "local_to_global": a * (1 - a) * dense,
        "global_to_local": a * (1 - a) * dense,
        "dfa": Fraction(2 * (c1 + c2) ** 2 + (c1 + c2) * hw),
    }
    f["total"] = ((1 - a ** 2) * dense + a ** 2 * c2 * hw * (half * c1 + thirteen_16 * c2)
                  + 2 * (c1 + c2) ** 2 + (c1 + c2) * hw)
    rep.h, rep.w, rep.flops = h, w, f
    return rep


def fft_flops(h: int, w: int) -> float:
    """Split-radix estimate ``5 HW log2(HW)`` for one complex 2-D transform of one channel."""
    hw = h * w
    return 5 * hw * math.log2(hw) if hw > 1 else 0.0


def spectral_fft_flops(c_global_out: int, h: int, w: int, lf_pool_ratio: float = 0.5) -> float:
    """FFT cost of one spectral transform: forward + inverse on the main path and the pooled residual."""
    hidden = max(1, c_global_out // 2)
    ph, pw = max(1, int(h * lf_pool_ratio)), max(1, int(w * lf_pool_ratio))
    return hidden * 2 * (fft_flops(h, w) + fft_flops(ph, pw))


# -- walked counts ---------------------------------------------------------------------------

@dataclass
class ParamBreakdown:
    weights: int = 0
    biases: int = 0
    bn: int = 0
    other: int = 0

    @property
    def total(self) -> int:
        return self.weights + self.biases + self.bn + self.other


def walked_params(module: Module) -> ParamBreakdown:
    """Element counts of every learnable tensor, bucketed by role."""
    out = ParamBreakdown()
    for name, p in module.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "weight" and p.ndim >= 2:
            out.weights += p.size
        elif leaf == "bias":
            out.biases += p.size
        elif leaf in ("gamma", "beta"):
            out.bn += p.size
        else:
            out.other += p.size
    return out


def _dfa_params(c_l: int, c_g: int, c_out: int, reduction: int, min_hidden: int = 8) -> int:
    hid = max(min_hidden, (c_l + c_g) // reduction)
    mlps = (c_g * hid + hid + hid * c_l + c_l) + (c_l * hid + hid + hid * c_g + c_g)
    return mlps + 2 * (c_l + c_g) + 2 + (c_l + c_g) * c_out


def _spectral_params(g_in: int, g_out: int, per_bin: tuple[int, int] | None) -> int:
    hid = max(1, g_out // 2)
    core = hid * per_bin[0] * per_bin[1] if per_bin else (2 * hid) ** 2
    return g_in * hid + 2 * hid + core + 2 * (2 * hid) + hid * g_out


def block_params(block: BlockConfig, cfg: ModelConfig, spatial: tuple[int, int]) -> int:
    """Closed-form count of one SFBlock as implemented (weights, biases and BN)."""
    k = block.kernel
    n = block.c_in * k * k + block.c_in * block.c_out
    l_in, g_in = split_sizes(block.c_out, block.alpha)
    l_out, g_out = l_in, g_in
    n += l_in * l_out * k * k
    if cfg.cross_paths:
        n += (g_in * l_out + l_in * g_out) * k * k
    if g_in and g_out:
        per_bin = None
        if cfg.per_bin_spectral:
            ph, pw = spatial[0] // block.pool_stride, spatial[1] // block.pool_stride
            per_bin = (max(2, ph // cfg.spectral_stride), max(2, pw // cfg.spectral_stride))
        n += _spectral_params(g_in, g_out, per_bin)
    n += 2 * l_out + 2 * g_out
    if l_out and g_out:
        n += _dfa_params(l_out, g_out, block.c_out, cfg.attn_reduction)
    return n


def model_params(cfg: ModelConfig) -> int:
    """Closed-form parameter count of a whole :class:`SpecXNet` built from ``cfg``."""
    c, h, w = cfg.input_shape
    n = c * cfg.stem_channels * 9 + 2 * cfg.stem_channels
    for b in cfg.blocks:
        n += block_params(b, cfg, (h, w))
        h, w = h // b.pool_stride, w // b.pool_stride
    last = cfg.blocks[-1].c_out if cfg.blocks else cfg.stem_channels
    return n + last * cfg.num_classes + cfg.num_classes


def ddfc_table_params(ddfc: DDFC) -> int:
    """Walked DDFC count under the analytic convention: conv weights only, no bias or BN."""
    return walked_params(ddfc).weights


# -- micro-benchmark -------------------------------------------------------------------------

@dataclass
class BenchResult:
    name: str
    shape: tuple[int, ...]
    median_ns: float
    ops_per_s: float
    samples: list[float] = field(default_factory=list)


def microbench(fn: Callable[[], object], repeats: int = 20, warmup: int = 3, name: str = "",
               shape: tuple[int, ...] = ()) -> BenchResult:
    """Median wall-clock of ``fn()`` over ``repeats`` timed runs after ``warmup`` untimed ones."""
    if warmup < 3:
        raise ValueError(f"need at least 3 warm-up iterations, got {warmup}")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(float(time.perf_counter_ns() - t0))
    med = statistics.median(samples)
    return BenchResult(name, tuple(shape), med, 1e9 / med if med > 0 else math.inf, samples)


def _forward(module: Module, x: Tensor) -> Callable[[], object]:
    module.eval()

    def run():
        with no_grad():
            return module(x)
    return run


def spectral_scaling(channels: int = 8, sizes=(16, 32, 64), batch: int = 1, repeats: int = 20,
                     seed: int = 0) -> list[BenchResult]:
    """Time the spectral transform alone at each ``H = W`` in ``sizes``."""
    rng = np.random.default_rng(seed)
    st = SpectralTransform(channels, channels, rng)
    out = []
    for s in sizes:
        x = Tensor(rng.standard_normal((batch, channels, s, s)))
        out.append(microbench(_forward(st, x), repeats, name="spectral", shape=x.shape))
    return out


def compare_blocks(cfg: ModelConfig, repeats: int = 20, batch: int = 1, seed: int = 0) -> list[BenchResult]:
    """SFBlock vs. the dense conv baseline block (same kernel, same pooling) at every block of ``cfg``."""
    rng = np.random.default_rng(seed)
    dtype = cfg.np_dtype
    _, h, w = cfg.input_shape
    out = []
    for i, b in enumerate(cfg.blocks):
        x = Tensor(rng.standard_normal((batch, b.c_in, h, w)).astype(dtype))
        sf = SFBlock(b, cfg, rng, spatial=(h, w))
        base = BaselineBlock(b, rng, dtype=dtype)
        out.append(microbench(_forward(sf, x), repeats, name=f"block{i}:sfblock", shape=x.shape))
        out.append(microbench(_forward(base, x), repeats, name=f"block{i}:dense", shape=x.shape))
        h, w = h // b.pool_stride, w // b.pool_stride
    return out


def bench_table(results: list[BenchResult], fmt: str = "text") -> str:
    if fmt == "csv":
        rows = ["name,shape,median_ns,ops_per_s"]
        rows += [f"{r.name},{'x'.join(map(str, r.shape))},{r.median_ns:.0f},{r.ops_per_s:.3f}" for r in results]
        return "\n".join(rows)
    rows = [f"{'name':<18}{'shape':>18}{'median ms':>12}{'ops/s':>10}"]
    rows += [f"{r.name:<18}{'x'.join(map(str, r.shape)):>18}{r.median_ns / 1e6:>12.3f}{r.ops_per_s:>10.1f}"
             for r in results]
    return "\n".join(rows)
