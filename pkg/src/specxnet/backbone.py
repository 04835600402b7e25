"""SFBlock stack and the SpecXNet classifier."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .config import BlockConfig, ModelConfig
from .ddfc import DDFC
from .dfa import DFA
from .nn import ConvBnRelu, Linear, Module, SeparableConv2d
from .tensor import Tensor


class SFBlock(Module):
    """Separable conv, max-pool, DDFC, then DFA fusion back to ``C_out`` channels.

    When one DDFC branch is empty (alpha 0 or 1) there is nothing to fuse and the
    non-empty branch is the block output.
    """

    def __init__(self, block: BlockConfig, cfg: ModelConfig, rng: np.random.Generator,
                 spatial: tuple[int, int] | None = None):
        dtype = cfg.np_dtype
        self.c_in, self.c_out, self.pool_stride = block.c_in, block.c_out, block.pool_stride
        self.alpha = block.alpha
        self.sep = SeparableConv2d(block.c_in, block.c_out, block.kernel, rng, dtype=dtype)
        per_bin = None
        if cfg.per_bin_spectral:
            if spatial is None:
                raise ValueError("per-bin spectral weights need the block's spatial size")
            ph = spatial[0] // block.pool_stride
            pw = spatial[1] // block.pool_stride
            per_bin = (max(2, ph // cfg.spectral_stride), max(2, pw // cfg.spectral_stride))
        self.ddfc = DDFC(block.c_out, block.c_out, block.kernel, block.alpha, rng,
                         cross_paths=cfg.cross_paths, spectral_stride=cfg.spectral_stride,
                         lf_pool_ratio=cfg.lf_pool_ratio, lf_crop_ratio=cfg.lf_crop_ratio,
                         per_bin_size=per_bin, bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum,
                         dtype=dtype)
        if self.ddfc.l_out and self.ddfc.g_out:
            self.dfa = DFA(self.ddfc.l_out, self.ddfc.g_out, block.c_out, rng,
                           reduction=cfg.attn_reduction, dtype=dtype)
        else:
            self.dfa = None

    def forward(self, x: Tensor) -> Tensor:
        x = self.sep(x)
        if self.pool_stride > 1:
            x = F.max_pool2d(x, self.pool_stride, self.pool_stride)
        y_local, y_global = self.ddfc(x)
        if self.dfa is None:
            return y_local if y_local.shape[1] else y_global
        return self.dfa(y_local, y_global)


class BaselineBlock(Module):
    """Plain separable conv, max-pool, conv-BN-ReLU: the reference an alpha=0 SFBlock degenerates to."""

    def __init__(self, block: BlockConfig, rng: np.random.Generator, *, bn_eps: float = 1e-5,
                 bn_momentum: float = 0.1, dtype=np.float64):
        self.pool_stride = block.pool_stride
        self.sep = SeparableConv2d(block.c_in, block.c_out, block.kernel, rng, dtype=dtype)
        self.body = ConvBnRelu(block.c_out, block.c_out, block.kernel, rng, eps=bn_eps,
                               momentum=bn_momentum, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = self.sep(x)
        if self.pool_stride > 1:
            x = F.max_pool2d(x, self.pool_stride, self.pool_stride)
        return self.body(x)


class SpecXNet(Module):
    def __init__(self, cfg: ModelConfig):
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        dtype = cfg.np_dtype
        c, h, w = cfg.input_shape
        self.stem = ConvBnRelu(c, cfg.stem_channels, 3, rng, eps=cfg.bn_eps, momentum=cfg.bn_momentum,
                               dtype=dtype)
        blocks = []
        for b in cfg.blocks:
            blocks.append(SFBlock(b, cfg, rng, spatial=(h, w)))
            h, w = h // b.pool_stride, w // b.pool_stride
        self.blocks = blocks
        last = cfg.blocks[-1].c_out if cfg.blocks else cfg.stem_channels
        self.head = Linear(last, cfg.num_classes, rng, dtype=dtype)

    def features(self, x: Tensor) -> Tensor:
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        n, c = x.shape[:2]
        return F.adaptive_avg_pool2d(x, 1, 1).reshape(n, c)

    def _classify(self, x: Tensor) -> Tensor:
        n, c = x.shape[:2]
        return self.head(F.adaptive_avg_pool2d(x, 1, 1).reshape(n, c))

    def stages(self) -> list[tuple[str, object]]:
        """``(parameter prefix, callable)`` in forward order; chaining them on a cast input is ``forward``."""
        return [("stem", self.stem)] + [(f"blocks.{i}", b) for i, b in enumerate(self.blocks)] + \
            [("head", self._classify)]

    def forward(self, x: Tensor) -> Tensor:
        expected = tuple(self.config.input_shape)
        if tuple(x.shape[1:]) != expected:
            raise ValueError(f"input batch {x.shape} does not match configured image shape {expected}")
        if x.dtype != self.config.np_dtype:
            x = Tensor(x.data.astype(self.config.np_dtype))
        for _, stage in self.stages():
            x = stage(x)
        return x
