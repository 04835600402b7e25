"""Cross-domain attention and softmax-weighted fusion of the local and global branches."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .nn import Conv2d, Linear, Module
from .tensor import Tensor, add, concat, index


def gap(y: Tensor) -> Tensor:
    return F.global_avg_pool(y)


class AttentionMLP(Module):
    """Two 1x1 stages on a pooled descriptor with a ReLU in between, sigmoid on the output."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator, dtype=np.float64):
        self.reduce = Linear(d_in, hidden, rng, dtype=dtype)
        self.expand = Linear(hidden, d_out, rng, dtype=dtype)

    def forward(self, z: Tensor) -> Tensor:
        if z.shape[1] != self.reduce.weight.shape[1]:
            raise ValueError(f"descriptor width {z.shape[1]} does not match attention input "
                             f"{self.reduce.weight.shape[1]}")
        return F.sigmoid(self.expand(F.relu(self.reduce(z))))


class DFA(Module):
    def __init__(self, c_local: int, c_global: int, c_out: int, rng: np.random.Generator, *,
                 reduction: int = 4, min_hidden: int = 8, dtype=np.float64):
        self.c_local, self.c_global, self.c_out = c_local, c_global, c_out
        hidden = max(min_hidden, (c_local + c_global) // reduction)
        self.hidden = hidden
        self.attn_l_from_g = AttentionMLP(c_global, hidden, c_local, rng, dtype)
        self.attn_g_from_l = AttentionMLP(c_local, hidden, c_global, rng, dtype)
        self.fusion = Linear(c_local + c_global, 2, rng, dtype=dtype)
        self.proj_local = Conv2d(c_local, c_out, 1, rng, dtype=dtype)
        self.proj_global = Conv2d(c_global, c_out, 1, rng, dtype=dtype)
        # test hooks
        self.residual = True
        self.attention_override: float | None = None
        self.last_gamma: np.ndarray | None = None
        self.last_attention: tuple[np.ndarray, np.ndarray] | None = None

    def attention_maps(self, z_l: Tensor, z_g: Tensor) -> tuple[Tensor, Tensor]:
        """Returns ``(A_g, A_l)``: A_g re-weights the C_l local channels, A_l the C_g global ones."""
        return self.attn_l_from_g(z_g), self.attn_g_from_l(z_l)

    def modulate(self, y_l: Tensor, y_g: Tensor, a_g: Tensor, a_l: Tensor) -> tuple[Tensor, Tensor]:
        if a_g.shape[1] != y_l.shape[1] or a_l.shape[1] != y_g.shape[1]:
            raise ValueError(f"attention widths {a_g.shape}/{a_l.shape} do not match branches "
                             f"{y_l.shape}/{y_g.shape}")
        m_l = F.channel_scale(y_l, a_g)
        m_g = F.channel_scale(y_g, a_l)
        if self.residual:
            return add(y_l, m_l), add(y_g, m_g)
        return m_l, m_g

    def fusion_weights(self, z_l: Tensor, z_g: Tensor) -> Tensor:
        return F.softmax(self.fusion(concat([z_l, z_g], axis=1)), axis=1)

    def adaptive_fuse(self, yt_l: Tensor, yt_g: Tensor, z_l: Tensor, z_g: Tensor) -> Tensor:
        p_l = self.proj_local(yt_l)
        p_g = self.proj_global(yt_g)
        if p_l.shape != p_g.shape:
            raise ValueError(f"projected branches disagree: {p_l.shape} vs {p_g.shape}")
        gamma = self.fusion_weights(z_l, z_g)
        self.last_gamma = gamma.data
        return add(F.example_scale(p_l, index(gamma, (slice(None), 0))),
                   F.example_scale(p_g, index(gamma, (slice(None), 1))))

    def forward(self, y_l: Tensor, y_g: Tensor) -> Tensor:
        z_l, z_g = gap(y_l), gap(y_g)
        if self.attention_override is None:
            a_g, a_l = self.attention_maps(z_l, z_g)
        else:
            n = y_l.shape[0]
            a_g = Tensor(np.full((n, self.c_local), self.attention_override, dtype=y_l.dtype))
            a_l = Tensor(np.full((n, self.c_global), self.attention_override, dtype=y_l.dtype))
        self.last_attention = (a_g.data, a_l.data)
        yt_l, yt_g = self.modulate(y_l, y_g, a_g, a_l)
        hl, wl = yt_l.shape[-2:]
        hg, wg = yt_g.shape[-2:]
        if (hl, wl) != (hg, wg):
            h, w = max(hl, hg), max(wl, wg)
            yt_l = F.bilinear_resize(yt_l, h, w)
            yt_g = F.bilinear_resize(yt_g, h, w)
        return self.adaptive_fuse(yt_l, yt_g, z_l, z_g)

