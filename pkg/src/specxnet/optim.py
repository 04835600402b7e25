"""Loss, L2 penalty, SGD with momentum (plus Adam as an option), and the learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import functional as F
from .tensor import Tensor, index


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Batch mean of ``-log softmax(logits)[label]`` via the log-sum-exp form."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    picked = index(F.log_softmax(logits, axis=1), (np.arange(n), labels))
    return -picked.mean()


def is_decayed(name: str, p: Tensor) -> bool:
    """Conv and linear weights carry the L2 penalty; biases, BN affine terms and spectral gains do not."""
    return name.endswith("weight") and p.ndim >= 2


def l2_penalty(named_params: Mapping[str, Tensor], lam: float) -> Tensor:
    if lam < 0:
        raise ValueError(f"weight decay must be non-negative, got {lam}")
    total = None
    for name, p in named_params.items():
        if not is_decayed(name, p):
            continue
        term = (p * p).sum()
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.zeros(()))
    return total * lam


@dataclass
class ScheduleSpec:
    warmup_epochs: int = 5
    horizon: int = 90
    decay_epochs: tuple[int, ...] = (30, 60, 80)
    decay_factor: float = 0.1

    def __post_init__(self):
        if self.warmup_epochs >= self.horizon:
            raise ValueError(f"warmup ({self.warmup_epochs}) must be shorter than horizon ({self.horizon})")
        if not 0 < self.decay_factor < 1:
            raise ValueError(f"decay factor must lie in (0, 1), got {self.decay_factor}")


def lr_at(epoch: float, base_lr: float, spec: ScheduleSpec) -> float:
    """Linear warm-up to ``base_lr``, cosine decay to the horizon, times a factor per passed decay epoch.

    Warm-up runs from ``base_lr / warmup`` at epoch 0 to ``base_lr`` at ``epoch == warmup``.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    w = spec.warmup_epochs
    if w > 0 and epoch < w:
        lr = base_lr * (1 + epoch * (w - 1) / w) / w
    else:
        progress = min((epoch - w) / (spec.horizon - w), 1.0)
        lr = base_lr * 0.5 * (1 + math.cos(math.pi * progress))
    passed = sum(1 for d in spec.decay_epochs if epoch >= d)
    return lr * spec.decay_factor ** passed


@dataclass
class OptimState:
    momentum: float = 0.9
    base_lr: float = 0.1
    weight_decay: float = 0.0
    step: int = 0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_momentum_step(params: Mapping[str, Tensor], state: OptimState, lr: float) -> None:
    """``v <- mu v - lr g`` then ``theta <- theta + v``, per parameter, in place."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v - lr * p.grad
        state.velocity[name] = v
        p.data = p.data + v
    state.step += 1


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float) -> None:
    state.step += 1
    t = state.step
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        m = state.beta1 * state.m.get(name, 0.0) + (1 - state.beta1) * p.grad
        v = state.beta2 * state.v.get(name, 0.0) + (1 - state.beta2) * p.grad ** 2
        state.m[name], state.v[name] = m, v
        mhat = m / (1 - state.beta1 ** t)
        vhat = v / (1 - state.beta2 ** t)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + state.eps)
