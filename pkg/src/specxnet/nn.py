"""Parameter containers: a minimal Module tree plus conv, BN and linear layers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing tensors: {sorted(missing)[:5]}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
            p.data = state[name].astype(p.dtype).copy()
        for name, buf in buffers.items():
            buf[...] = state[name]


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> Tensor:
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Conv2d(Module):
    """Convolution parameters: ``weight [C_out, C_in/groups, K, K]``, optional bias."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, *,
                 stride: int = 1, padding: int | None = None, groups: int = 1, bias: bool = False,
                 dtype=np.float64):
        if c_in % groups or c_out % groups:
            raise ValueError(f"groups={groups} must divide C_in={c_in} and C_out={c_out}")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.groups = groups
        fan_in = (c_in // groups) * kernel * kernel
        self.weight = kaiming_uniform(rng, (c_out, c_in // groups, kernel, kernel), fan_in, dtype)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, *, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float64):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps, self.momentum = eps, momentum

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.eps, self.momentum)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, *, bias: bool = True, dtype=np.float64):
        self.weight = kaiming_uniform(rng, (d_out, d_in), d_in, dtype)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class ConvBnRelu(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, *,
                 stride: int = 1, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float64):
        self.conv = Conv2d(c_in, c_out, kernel, rng, stride=stride, dtype=dtype)
        self.bn = BatchNorm2d(c_out, eps=eps, momentum=momentum, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))


class SeparableConv2d(Module):
    """Depthwise ``K x K`` (groups = C_in) followed by pointwise ``1 x 1``; no biases."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype=np.float64):
        self.depthwise = Conv2d(c_in, c_in, kernel, rng, groups=c_in, dtype=dtype)
        self.pointwise = Conv2d(c_in, c_out, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


def count_parameters(module: Module) -> int:
    return sum(p.size for p in module.parameters())
