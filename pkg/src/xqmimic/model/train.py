"""Mini-batch training with adaptive per-parameter step sizes.

The optimizer keeps first and second moment estimates per tensor and
applies the usual bias correction.  Early stopping watches validation
top-1 accuracy: after `patience` epochs without a strict improvement
the loop stops and the best snapshot is restored.  Validation accuracy
here is the plain argmax against the label, no mask involved; masked
evaluation needs the full game context, which windowed samples no
longer carry, and lives in the evaluation suite instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..dataset import DatasetSplit, TrainingSample
from ..errors import DivergenceDetected
from .config import StructureConfig
from .network import BN_MOMENTUM, ModelParameters, forward_batch, loss_and_grads, trainable_names


@dataclass(frozen=True)
class TrainingOptions:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # optional early exit once infer-mode train accuracy reaches the target
    stop_at_train_accuracy: Optional[float] = None


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float
    train_accuracy: Optional[float] = None


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")
    stop_reason: str = "max_epochs"
    wall_seconds: float = 0.0

    @property
    def final_val_accuracy(self) -> float:
        return self.best_val_accuracy


@dataclass
class TrainingResult:
    params: ModelParameters
    history: TrainingHistory


def _to_arrays(samples: Sequence[TrainingSample]) -> tuple[list[np.ndarray], np.ndarray]:
    xs = [np.asarray(s.x, dtype=np.int64) for s in samples]
    ys = np.asarray([s.y for s in samples], dtype=np.int64)
    return xs, ys


def accuracy(
    params: ModelParameters,
    config: StructureConfig,
    xs: Sequence[np.ndarray],
    ys: np.ndarray,
    batch_size: int = 512,
) -> float:
    """Infer-mode argmax accuracy; ties resolve to the lowest index."""
    if not len(xs):
        return float("nan")
    hits = 0
    for lo in range(0, len(xs), batch_size):
        probs = forward_batch(params, config, xs[lo : lo + batch_size], mode="infer")
        hits += int((probs.argmax(axis=1) == ys[lo : lo + batch_size]).sum())
    return hits / len(xs)


class _Adam:
    def __init__(self, params: ModelParameters, options: TrainingOptions):
        self.options = options
        self.step = 0
        self.m = {n: np.zeros_like(params.tensors[n]) for n in trainable_names(params)}
        self.v = {n: np.zeros_like(params.tensors[n]) for n in trainable_names(params)}

    def update(self, params: ModelParameters, grads: dict[str, np.ndarray]) -> None:
        o = self.options
        self.step += 1
        correct1 = 1.0 - o.beta1**self.step
        correct2 = 1.0 - o.beta2**self.step
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - o.beta1) * (g - m)
            v += (1.0 - o.beta2) * (g * g - v)
            step = o.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + o.eps)
            params.tensors[name] -= step.astype(params.tensors[name].dtype, copy=False)


def train(
    params: ModelParameters,
    config: StructureConfig,
    split: DatasetSplit,
    options: TrainingOptions = TrainingOptions(),
    rng: Optional[np.random.Generator] = None,
) -> TrainingResult:
    """Fit `params` in place on the split's train part; returns them with a log.

    Raises DivergenceDetected the moment a batch loss stops being finite,
    with whatever history accumulated up to that point attached.
    """
    if not split.train:
        raise ValueError("empty training split")
    rng = rng if rng is not None else np.random.default_rng(options.seed)
    train_xs, train_ys = _to_arrays(split.train)
    val_xs, val_ys = _to_arrays(split.validation)

    opt = _Adam(params, options)
    history = TrainingHistory()
    best: Optional[ModelParameters] = None
    since_best = 0
    started = time.monotonic()

    for epoch in range(1, options.max_epochs + 1):
        order = rng.permutation(len(train_xs))
        total, seen = 0.0, 0
        for lo in range(0, len(order), options.batch_size):
            batch = order[lo : lo + options.batch_size]
            stats: dict = {}
            # runaway parameters produce inf/nan here on purpose: the
            # loss check below is the divergence detector, not a fault
            with np.errstate(over="ignore", invalid="ignore"):
                value, grads = loss_and_grads(
                    params,
                    config,
                    [train_xs[i] for i in batch],
                    train_ys[batch],
                    mode="train",
                    rng=rng,
                    stats=stats,
                )
            if not np.isfinite(value):
                history.stop_reason = "diverged"
                history.wall_seconds = time.monotonic() - started
                raise DivergenceDetected(
                    f"loss became {value} in epoch {epoch}", history=history
                )
            with np.errstate(over="ignore", invalid="ignore"):
                opt.update(params, grads)
            if stats:
                # fold batch statistics into the running estimates
                for key, name in (("mean", "bn_mean"), ("var", "bn_var")):
                    running = params.tensors[name]
                    running += BN_MOMENTUM * (stats[key].astype(running.dtype) - running)
            total += value * len(batch)
            seen += len(batch)

        # same errstate story: one epoch may run on already-broken
        # parameters before the next loss check raises
        with np.errstate(over="ignore", invalid="ignore"):
            val_acc = accuracy(params, config, val_xs, val_ys)
            train_acc = None
            if options.stop_at_train_accuracy is not None:
                train_acc = accuracy(params, config, train_xs, train_ys)
        history.epochs.append(EpochStats(epoch, total / seen, val_acc, train_acc))

        if train_acc is not None and train_acc >= options.stop_at_train_accuracy:
            history.stop_reason = "target_reached"
            best, history.best_epoch, history.best_val_accuracy = None, epoch, val_acc
            break

        if np.isnan(val_acc):
            continue  # nothing to select on; run to max_epochs
        if history.best_epoch < 0 or val_acc > history.best_val_accuracy:
            history.best_epoch = epoch
            history.best_val_accuracy = val_acc
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= options.patience:
                history.stop_reason = "patience"
                break

    if best is not None:
        params.tensors = best.tensors
    history.wall_seconds = time.monotonic() - started
    return TrainingResult(params, history)
