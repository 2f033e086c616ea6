"""Training loop: adaptive optimizer, patience schedule, checkpoints.

The monitored metric is validation sequence accuracy: the fraction of
sequences whose frame-averaged top class is one of the labeled classes.
Learning rate halves after every 10 consecutive epochs without improvement
and the loop stops after 20; both counts share one staleness counter, so a
halving at stale=10 takes effect from the next epoch onward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from ambiloc import tensorfile
from ambiloc.model.config import ArchConfig, config_by_name
from ambiloc.model.network import Network, Params


class TrainingDiverged(RuntimeError):
    """Raised when an epoch produces a non-finite loss."""

    def __init__(self, epoch: int, loss: float) -> None:
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float = 1e-3
    max_epochs: int = 300
    batch_size: int = 32
    halve_patience: int = 10
    stop_patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.halve_patience < 1 or self.stop_patience < 1:
            raise ValueError("patience values must be positive")
        if self.halve_patience >= self.stop_patience:
            raise ValueError("halving patience must be below stop patience")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    learning_rate: float


@dataclass
class TrainResult:
    params: Params
    history: list[EpochRecord]
    best_epoch: int
    best_accuracy: float
    epochs_run: int
    stopped_early: bool = False


class AdamOptimizer:
    """Per-parameter moment-based gradient step with bias correction."""

    def __init__(
        self,
        params: Params,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.learning_rate = float(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Params) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        scale1 = 1.0 - b1 ** t
        scale2 = 1.0 - b2 ** t
        for name in sorted(self.params):
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / scale1) / (np.sqrt(v / scale2) + self.eps)
            self.params[name] -= self.learning_rate * update


def _batches(count: int, batch_size: int) -> Iterator[slice]:
    for start in range(0, count, batch_size):
        yield slice(start, min(start + batch_size, count))


def sequence_accuracy(
    network: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 32
) -> float:
    """Fraction of sequences whose frame-averaged top class is labeled."""
    if len(x) == 0:
        raise ValueError("empty evaluation set")
    hits = 0
    for sl in _batches(len(x), batch_size):
        probs = network.predict_proba(x[sl])
        top = probs.mean(axis=1).argmax(axis=1)
        hits += int((y[sl][np.arange(len(top)), top] == 1).sum())
    return hits / len(x)


def train(
    cfg: ArchConfig,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    schedule: TrainSchedule | None = None,
    seed: int = 0,
    callback: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train a freshly initialized network; return the best-validation state.

    Fully deterministic for a given seed: initialization, batch order, and
    every reduction run in a fixed order on one process.
    """
    schedule = schedule or TrainSchedule()
    train_x, train_y = train_data
    val_x, val_y = val_data
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("train and validation sets must be non-empty")

    network = Network(cfg, seed=seed)
    optimizer = AdamOptimizer(
        network.params,
        learning_rate=schedule.learning_rate,
        beta1=schedule.beta1,
        beta2=schedule.beta2,
        eps=schedule.eps,
    )
    rng = np.random.default_rng(seed)

    best_accuracy = sequence_accuracy(network, val_x, val_y, schedule.batch_size)
    best_epoch = 0
    best_params = {k: v.copy() for k, v in network.params.items()}
    history = [EpochRecord(0, math.nan, best_accuracy, optimizer.learning_rate)]
    if callback is not None:
        callback(history[0])

    stale = 0
    stopped_early = False
    epoch = 0
    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.permutation(len(train_x))
        loss_sum = 0.0
        for sl in _batches(len(order), schedule.batch_size):
            idx = order[sl]
            loss, grads = network.loss_and_gradients(train_x[idx], train_y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            optimizer.step(grads)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / len(train_x)

        val_accuracy = sequence_accuracy(network, val_x, val_y, schedule.batch_size)
        record = EpochRecord(epoch, train_loss, val_accuracy, optimizer.learning_rate)
        history.append(record)
        if callback is not None:
            callback(record)

        if val_accuracy > best_accuracy:
            best_accuracy = val_accuracy
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in network.params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= schedule.stop_patience:
                stopped_early = True
                break
            if stale % schedule.halve_patience == 0:
                optimizer.learning_rate /= 2.0

    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_accuracy=best_accuracy,
        epochs_run=epoch,
        stopped_early=stopped_early,
    )


def history_to_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,train_loss,val_accuracy,learning_rate"]
    for rec in history:
        lines.append(
            f"{rec.epoch},{rec.train_loss:.6f},{rec.val_accuracy:.6f},"
            f"{rec.learning_rate:.8g}"
        )
    return "\n".join(lines) + "\n"


def save_checkpoint(
    path: str | Path,
    cfg: ArchConfig,
    params: Params,
    epoch: int,
    val_accuracy: float,
) -> None:
    """Parameter tensors in the binary container plus a text manifest."""
    path = Path(path)
    tensorfile.write_tensors(path, {k: params[k] for k in sorted(params)})
    meta = Path(str(path) + ".meta.txt")
    meta.write_text(
        f"config={cfg.name}\n"
        f"class_count={cfg.class_count}\n"
        f"epoch={epoch}\n"
        f"val_accuracy={val_accuracy:.6f}\n"
    )


def load_checkpoint(path: str | Path) -> tuple[Network, dict[str, str]]:
    path = Path(path)
    meta_path = Path(str(path) + ".meta.txt")
    meta: dict[str, str] = {}
    for line in meta_path.read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key] = value
    cfg = config_by_name(meta["config"], int(meta["class_count"]))
    params = tensorfile.read_tensors(path)
    network = Network(cfg, params=params)
    return network, meta
