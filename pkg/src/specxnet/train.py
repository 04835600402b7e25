"""Minibatch training loop, metric logging, best-val checkpointing and evaluation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .backbone import SpecXNet
from .config import ModelConfig, TrainConfig, dump_config, load_config
from .data import DatasetManifest, load_split
from .metrics import summarize
from .optim import (AdamState, OptimState, ScheduleSpec, adam_step, cross_entropy_loss, l2_penalty, lr_at,
                    sgd_momentum_step)
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "split", "loss", "accuracy", "auc", "map", "lr"]
CONFIG_NAME = "config.cfg"
BEST_NAME = "best.spxc"
FINAL_NAME = "final.spxc"
LOG_NAME = "metrics.csv"


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch, self.step, self.loss = epoch, step, loss


@dataclass
class TrainResult:
    model: SpecXNet
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val: dict | None = None
    out_dir: Path | None = None


def _softmax_fake(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e[:, 1] / e.sum(axis=1)


def predict(model: SpecXNet, images: np.ndarray, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits and fake-class probabilities."""
    model.eval()
    out = []
    with no_grad():
        for i in range(0, len(images), batch_size):
            out.append(model(Tensor(images[i:i + batch_size])).data)
    logits = np.concatenate(out) if out else np.zeros((0, 2))
    return logits, _softmax_fake(logits)


def _mean_ce(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return math.nan
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def _fmt(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_set: tuple[np.ndarray, np.ndarray],
          val_set: tuple[np.ndarray, np.ndarray] | None = None, out_dir: str | Path | None = None,
          model: SpecXNet | None = None) -> TrainResult:
    x_train, y_train = train_set
    if len(y_train) == 0:
        raise ValueError("training set is empty")
    if set(np.unique(y_train)) != {0, 1}:
        raise ValueError("training set must contain both classes")
    dtype = model_cfg.np_dtype
    x_train = x_train.astype(dtype, copy=False)
    model = model or SpecXNet(model_cfg)
    params = dict(model.named_parameters())
    schedule = ScheduleSpec(train_cfg.warmup_epochs, train_cfg.horizon, tuple(train_cfg.decay_epochs),
                            train_cfg.decay_factor)
    if train_cfg.optimizer == "sgd":
        state = OptimState(momentum=train_cfg.momentum, base_lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    else:
        state = AdamState()

    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_NAME).write_text(dump_config(model_cfg, train_cfg), encoding="utf-8")
        log_file = open(out / LOG_NAME, "w", encoding="utf-8", newline="")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(METRICS_HEADER)

    result = TrainResult(model, out_dir=out)
    best_key = None
    n = len(y_train)
    bs = train_cfg.batch_size
    step = 0
    try:
        for epoch in range(train_cfg.epochs):
            lr = lr_at(epoch, train_cfg.lr, schedule)
            model.train()
            perm = epoch_permutation(train_cfg.seed, epoch, n)
            loss_sum, scores = 0.0, np.empty(n)
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                model.zero_grad()
                logits = model(Tensor(x_train[idx]))
                loss = cross_entropy_loss(logits, y_train[idx])
                if train_cfg.weight_decay:
                    loss = loss + l2_penalty(params, train_cfg.weight_decay)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(epoch, step, value)
                loss.backward()
                if train_cfg.optimizer == "sgd":
                    sgd_momentum_step(params, state, lr)
                else:
                    adam_step(params, state, lr)
                loss_sum += value * len(idx)
                scores[idx] = _softmax_fake(logits.data)
                step += 1
            rows = [dict(epoch=epoch, split="train", loss=loss_sum / n, lr=lr, **summarize(scores, y_train))]
            if val_set is not None and len(val_set[1]):
                vx, vy = val_set
                vlogits, vscores = predict(model, vx.astype(dtype, copy=False), bs)
                val = dict(epoch=epoch, split="val", loss=_mean_ce(vlogits, vy), lr=lr, **summarize(vscores, vy))
                rows.append(val)
                key = (val["accuracy"], -val["loss"])
                if best_key is None or key > best_key:
                    best_key, result.best_epoch, result.best_val = key, epoch, val
                    if out is not None:
                        checkpoint.save(out / BEST_NAME, model.state_dict())
            for r in rows:
                result.rows.append(r)
                if writer is not None:
                    writer.writerow([r["epoch"], r["split"]] + [_fmt(r[k]) for k in METRICS_HEADER[2:]])
            log.info("epoch %d lr %.4g train loss %.4f acc %.4f%s", epoch, lr, rows[0]["loss"],
                     rows[0]["accuracy"],
                     f" val acc {rows[1]['accuracy']:.4f}" if len(rows) > 1 else "")
    finally:
        if writer is not None:
            log_file.close()
    if out is not None:
        checkpoint.save(out / FINAL_NAME, model.state_dict())
        if best_key is None:
            checkpoint.save(out / BEST_NAME, model.state_dict())
    return result


def train_from_manifest(model_cfg: ModelConfig, train_cfg: TrainConfig, manifest: DatasetManifest,
                        out_dir: str | Path | None = None) -> TrainResult:
    c = model_cfg.input_shape[0]
    dtype = model_cfg.np_dtype
    train_set = load_split(manifest, "train", c, dtype)
    val_set = load_split(manifest, "val", c, dtype)
    return train(model_cfg, train_cfg, train_set, val_set, out_dir)


def load_model(ckpt_path: str | Path, config_path: str | Path | None = None) -> SpecXNet:
    ckpt_path = Path(ckpt_path)
    config_path = Path(config_path) if config_path else ckpt_path.parent / CONFIG_NAME
    model_cfg, _ = load_config(config_path)
    model = SpecXNet(model_cfg)
    model.load_state_dict(checkpoint.load(ckpt_path))
    return model


def evaluate(model: SpecXNet, images: np.ndarray, labels: np.ndarray, batch_size: int = 64) -> dict[str, float]:
    """Accuracy at a 0.5 fake-probability threshold, ROC AUC and average precision (``map``)."""
    logits, scores = predict(model, images.astype(model.config.np_dtype, copy=False), batch_size)
    out = summarize(scores, labels)
    out["loss"] = _mean_ce(logits, labels)
    return out


def ablate_alpha(base_cfg: ModelConfig, train_cfg: TrainConfig, manifest: DatasetManifest, alphas,
                 out_dir: str | Path | None = None, eval_split: str = "test") -> list[tuple[float, float]]:
    """Train one model per ``alpha`` (same seed, same data) and report its accuracy on ``eval_split``.

    The final-epoch weights are evaluated; the validation split, if present, is only logged.
    """
    c = base_cfg.input_shape[0]
    dtype = base_cfg.np_dtype
    train_set = load_split(manifest, "train", c, dtype)
    val_set = load_split(manifest, "val", c, dtype)
    test_x, test_y = load_split(manifest, eval_split, c, dtype)
    if len(test_y) == 0:
        raise ValueError(f"split {eval_split!r} is empty")
    rows = []
    for alpha in alphas:
        run_dir = Path(out_dir) / f"alpha_{alpha:g}" if out_dir is not None else None
        result = train(base_cfg.with_alpha(alpha), train_cfg, train_set, val_set, run_dir)
        acc = evaluate(result.model, test_x, test_y)["accuracy"]
        log.info("alpha %g: %s accuracy %.4f", alpha, eval_split, acc)
        rows.append((float(alpha), acc))
    return rows
