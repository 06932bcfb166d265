"""Adam optimization with LR schedule, early stopping, and history export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sonabs.network.model import NetworkModel, loss_and_gradients


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    max_epochs: int = 250
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.9
    lr_decay_start_epoch: int = 11  # 1-based; LR is constant before this
    l2: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 20
    min_delta: float = 1e-6
    restore_best: bool = True
    decoupled_weight_decay: bool = False
    divergence_limit: float = 1e3
    seed: int = 0

    def __post_init__(self):
        if min(self.max_epochs, self.batch_size, self.patience) <= 0:
            raise ValueError("epochs, batch size, and patience must be positive")
        if min(self.lr, self.lr_decay, self.eps) <= 0 or self.l2 < 0:
            raise ValueError("hyperparameters must be positive (l2 non-negative)")

    def learning_rate(self, epoch: int) -> float:
        """Constant through epoch lr_decay_start_epoch-1, then *decay per epoch."""
        exponent = max(0, epoch - (self.lr_decay_start_epoch - 1))
        return self.lr * self.lr_decay**exponent


class Adam:
    """Standard Adam with bias correction, one slot pair per parameter."""

    def __init__(self, model: NetworkModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(v) for name, v, _, _ in model.named_params()}
        self.v = {name: np.zeros_like(v) for name, v, _, _ in model.named_params()}

    def step(self, model: NetworkModel, lr: float) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, value, grad, is_weight in model.named_params():
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            value -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            if cfg.decoupled_weight_decay and is_weight and cfg.l2 > 0:
                value -= lr * 2.0 * cfg.l2 * value


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


def validation_mse(model: NetworkModel, features, theta_std, labels,
                   chunk: int = 512) -> float:
    total = 0.0
    n = features.shape[0]
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        pred = model.forward(features[lo:hi], theta_std[lo:hi])
        err = pred - labels[lo:hi]
        total += float(np.sum(err * err))
    return total / (n * labels.shape[1])


def train(
    model: NetworkModel,
    train_set: tuple,
    val_set: tuple,
    cfg: TrainConfig,
    progress=None,
) -> list[EpochRecord]:
    """Mini-batch Adam with exponential LR decay and early stopping.

    train_set/val_set are (features (n,C,L), theta_std (n,), labels (n,L))
    already standardized with the training-set statistics. The history
    records the plain MSE per epoch (the optimization objective additionally
    carries the L2 penalty); early stopping watches the validation MSE and
    restores the best weights.
    """
    x_tr, th_tr, y_tr = train_set
    x_va, th_va, y_va = val_set
    n = x_tr.shape[0]
    if n == 0 or x_va.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    optimizer = Adam(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    l2 = 0.0 if cfg.decoupled_weight_decay else cfg.l2
    history: list[EpochRecord] = []
    best_val = np.inf
    best_weights = None
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.learning_rate(epoch)
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            try:
                objective, mse = loss_and_gradients(
                    model, x_tr[idx], th_tr[idx], y_tr[idx], l2=l2
                )
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch at {lo}: {exc}"
                ) from exc
            if objective > cfg.divergence_limit:
                raise TrainingDiverged(
                    f"epoch {epoch}: batch loss {objective:.3e} exceeds "
                    f"{cfg.divergence_limit:.0e}"
                )
            optimizer.step(model, lr)
            batch_losses.append(mse)
        val = validation_mse(model, x_va, th_va, y_va)
        history.append(EpochRecord(epoch, lr, float(np.mean(batch_losses)), val))
        if progress is not None:
            progress(history[-1])
        if best_val - val > cfg.min_delta:
            best_val = val
            best_weights = model.get_weights()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    if cfg.restore_best and best_weights is not None:
        model.set_weights(best_weights)
    return history


def write_history_csv(history: list[EpochRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for rec in history:
            writer.writerow([rec.epoch, f"{rec.lr:.10g}",
                             f"{rec.train_loss:.12g}", f"{rec.val_loss:.12g}"])


def read_history_csv(path) -> list[EpochRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EpochRecord(
                    int(row["epoch"]),
                    float(row["lr"]),
                    float(row["train_loss"]),
                    float(row["val_loss"]),
                )
            )
    return out
