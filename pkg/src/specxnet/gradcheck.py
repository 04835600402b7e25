"""Central-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, detect_anomaly, no_grad


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst_param: str
    per_param: dict[str, float] = field(default_factory=dict)
    n_coords: int = 0
    n_kinks: int = 0

    def passed(self, tol: float = 1e-4, max_kink_fraction: float = 0.05) -> bool:
        return self.max_rel_error < tol and self.n_kinks <= max_kink_fraction * max(self.n_coords, 1)


def rel_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def gradcheck(fn: Callable[[], Tensor], params: Mapping[str, Tensor], seed: int = 0, *,
              step: float = 1e-5, coords: int = 200, tol: float = 1e-4,
              suffix_fn: Callable[[str], Callable[[], Tensor]] | None = None) -> GradcheckReport:
    """Compare reverse-mode gradients of the scalar ``fn()`` against central differences.

    ``fn`` must rebuild its graph on every call and be deterministic. Up to ``coords``
    coordinates per parameter are sampled (all of them when the parameter is smaller).

    A coordinate that misses ``tol`` is re-measured with ``step / 10``. If the two
    central differences disagree with each other by more than ``tol``, a ReLU/max-pool
    switch lies inside the stencil and the finite difference is not a derivative
    estimate there; such coordinates are counted in ``n_kinks`` instead of scored.

    ``suffix_fn(name)``, if given, returns a cheaper callable with the same value as ``fn``
    for perturbations of parameter ``name`` (e.g. re-running only the layers after it).
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    with detect_anomaly():
        loss = fn()
        if loss.size != 1:
            raise ValueError(f"gradcheck needs a scalar function, got shape {loss.shape}")
        loss.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    def central(f, flat, i, h):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f().item()
        flat[i] = orig - h
        f_minus = f().item()
        flat[i] = orig
        return (f_plus - f_minus) / (2 * h)

    report = GradcheckReport(0.0, "")
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= coords else rng.choice(n, size=coords, replace=False)
        exact = analytic[name].reshape(-1)[idx]
        keep = np.ones(len(idx), dtype=bool)
        with no_grad(), detect_anomaly():
            f = fn if suffix_fn is None else suffix_fn(name)
            numeric = np.array([central(f, flat, i, step) for i in idx])
            err = rel_error(exact, numeric)
            for k in np.nonzero(err >= tol)[0]:
                fine = central(f, flat, idx[k], step / 10)
                if rel_error(np.array(numeric[k]), np.array(fine)) > tol:
                    keep[k] = False
        report.n_kinks += int((~keep).sum())
        err = err[keep]
        worst = float(err.max()) if err.size else 0.0
        report.per_param[name] = worst
        report.n_coords += len(idx)
        if worst >= report.max_rel_error:
            report.max_rel_error, report.worst_param = worst, name
    return report


def projection_loss(out: Tensor, seed: int = 0) -> Tensor:
    """``sum(out * R)`` with a fixed random ``R`` scaled so the loss is O(1)."""
    r = np.random.default_rng(seed).standard_normal(out.shape) / np.sqrt(max(out.size, 1))
    return (out * r.astype(out.dtype)).sum()


SUITE = ("ddfc", "dfa", "sfblock", "model")


def _case(name: str, seed: int):
    """Build ``(loss_fn, params, suffix_fn)`` for one named gradcheck case, in float64 training mode."""
    from .backbone import SFBlock, SpecXNet
    from .config import BlockConfig, desk_config
    from .ddfc import DDFC
    from .dfa import DFA

    rng = np.random.default_rng(seed)
    if name == "ddfc":
        mod = DDFC(8, 8, 3, 0.5, rng)
        x = Tensor(rng.standard_normal((2, 8, 8, 8)))

        def fn():
            y_l, y_g = mod(x)
            return projection_loss(y_l, seed) + projection_loss(y_g, seed + 1)
    elif name == "dfa":
        mod = DFA(4, 4, 8, rng)
        y_l = Tensor(rng.standard_normal((2, 4, 8, 8)))
        y_g = Tensor(rng.standard_normal((2, 4, 4, 4)))

        def fn():
            return projection_loss(mod(y_l, y_g), seed)
    elif name == "sfblock":
        cfg = desk_config()
        mod = SFBlock(BlockConfig(8, 8, 3, 2, 0.5), cfg, rng, spatial=(16, 16))
        x = Tensor(rng.standard_normal((2, 8, 16, 16)))

        def fn():
            return projection_loss(mod(x), seed)
    elif name == "model":
        cfg = desk_config(seed=seed)
        mod = SpecXNet(cfg)
        x = Tensor(rng.random((1,) + tuple(cfg.input_shape)))

        def fn():
            return projection_loss(mod(x), seed)

        stages = mod.stages()

        def suffix_fn(name):
            # layers before the perturbed one see unchanged parameters: run them once
            j = next(i for i, (prefix, _) in enumerate(stages) if name.startswith(prefix + "."))
            h = x
            for _, stage in stages[:j]:
                h = stage(h)

            def tail():
                y = h
                for _, stage in stages[j:]:
                    y = stage(y)
                return projection_loss(y, seed)
            return tail
        mod.train()
        return fn, dict(mod.named_parameters()), suffix_fn
    else:
        raise ValueError(f"unknown gradcheck case {name!r}; choose from {SUITE}")
    mod.train()
    return fn, dict(mod.named_parameters()), None


def run_suite(which: str = "all", seed: int = 0, coords: int = 200) -> dict[str, GradcheckReport]:
    """Gradient-check DDFC, DFA, an SFBlock and the full desk model (``which`` may pick one)."""
    if which == "backbone":
        names = ["sfblock", "model"]
    elif which == "all":
        names = list(SUITE)
    else:
        names = [which]
    out = {}
    for name in names:
        fn, params, suffix_fn = _case(name, seed)
        out[name] = gradcheck(fn, params, seed, coords=coords, suffix_fn=suffix_fn)
    return out
