"""Mini-batch SGD with momentum, step decay and a per-epoch history."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..rng import make_rng
from .layers import Module
from .losses import argmax, cross_entropy


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_steps: tuple = ()
    lr_gamma: float = 0.1
    eval_batch_size: int = 16
    stop_at: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch sizes >= 1")
        if self.lr < 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0, momentum in [0, 1)")
        object.__setattr__(self, "lr_steps", tuple(int(s) for s in self.lr_steps))

    def lr_at(self, epoch: int) -> float:
        """Learning rate of 0-based ``epoch``."""
        return self.lr * self.lr_gamma ** sum(epoch >= s for s in self.lr_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_steps"] = list(self.lr_steps)
        return d


class ArrayDataset:
    """Fixed volumes ``x`` of shape ``(N, C, T, H, W)`` with integer labels."""

    def __init__(self, x, labels):
        self.x = np.asarray(x)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.x) != len(self.labels) or len(self.x) == 0:
            raise ValueError(f"need a nonempty dataset with one label per volume, got "
                             f"{len(self.x)} volumes and {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def volumes(self, indices, epoch: int | None = None) -> np.ndarray:
        """Batch for ``indices``; ``epoch=None`` asks for evaluation inputs."""
        return self.x[np.asarray(indices)]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float | None
    lr: float
    seconds: float


@dataclass
class History:
    records: list = field(default_factory=list)

    CSV_COLUMNS = ("epoch", "loss", "train_acc", "val_acc")

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    def to_csv(self, path) -> None:
        """Columns epoch, loss, train_acc, val_acc (val_acc empty without a validation set).

        Wall-clock time is left out so equal runs give identical files.
        """
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            for r in self.records:
                w.writerow([r.epoch, f"{r.loss:.6f}", f"{r.train_acc:.6f}",
                            "" if r.val_acc is None else f"{r.val_acc:.6f}"])


class SGD:
    """Momentum SGD; weight decay applies to conv and linear weights only."""

    def __init__(self, net: Module, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = [t for _, t in net.named_parameters()]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(t.values) for t in self.params]

    def step(self, lr: float) -> None:
        for t, v in zip(self.params, self.velocity):
            if t.grad is None:
                continue
            g = t.grad
            if self.weight_decay and t.values.ndim > 1:
                g = g + self.weight_decay * t.values
            v *= self.momentum
            v += g
            t.values -= (lr * v).astype(t.values.dtype)


def predict_logits(net: Module, dataset, batch_size: int = 16) -> np.ndarray:
    net.eval()
    out = []
    for s in range(0, len(dataset), batch_size):
        idx = np.arange(s, min(s + batch_size, len(dataset)))
        out.append(net.forward(dataset.volumes(idx, None)))
    net.clear_cache()
    return np.concatenate(out, axis=0)


def evaluate(net: Module, dataset, batch_size: int = 16) -> float:
    pred = argmax(predict_logits(net, dataset, batch_size))
    return float(np.mean(pred == dataset.labels))


def train(net: Module, dataset, hyper: TrainConfig = TrainConfig(), seed: int = 0,
          val_data=None, on_epoch=None) -> History:
    """Train ``net`` in place on ``dataset`` and return its history.

    ``dataset`` needs ``__len__``, ``labels`` and ``volumes(indices, epoch)``;
    the epoch argument lets a dataset re-sample or augment each epoch. Batch
    order comes from ``make_rng(seed, epoch)`` so runs are reproducible.
    ``on_epoch(record)`` is called after every epoch. With ``hyper.stop_at``
    set, training ends after the first epoch whose held-out accuracy reaches it.
    """
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    opt = SGD(net, hyper.momentum, hyper.weight_decay)
    labels = np.asarray(dataset.labels)
    history = History()
    for epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        lr = hyper.lr_at(epoch)
        order = make_rng(seed, epoch).permutation(len(dataset))
        net.train()
        loss_sum, correct = 0.0, 0
        for s in range(0, len(order), hyper.batch_size):
            idx = order[s:s + hyper.batch_size]
            x = dataset.volumes(idx, epoch)
            logits = net.forward(x)
            loss, g = cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch + 1, loss)
            net.zero_grad()
            net.backward(g.astype(logits.dtype))
            opt.step(lr)
            loss_sum += loss * len(idx)
            correct += int(np.sum(argmax(logits) == labels[idx]))
        val_acc = evaluate(net, val_data, hyper.eval_batch_size) if val_data is not None else None
        rec = EpochRecord(epoch + 1, loss_sum / len(order), correct / len(order), val_acc, lr,
                          time.perf_counter() - t0)
        history.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        if hyper.stop_at is not None and val_acc is not None and val_acc >= hyper.stop_at:
            break
    net.eval()
    return history
