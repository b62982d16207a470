"""Mini-batch training loop, learning curves and featurisation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..features import FeatureMatrix
from ..io import atomic_write_text
from .model import CAEConfig, CAEModel, adam_step

logger = logging.getLogger(__name__)


@dataclass
class LearningCurve:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    @property
    def best_epoch(self) -> int:
        """1-based epoch with the lowest validation loss."""
        return int(np.argmin(self.val_loss)) + 1

    def epochs_to_plateau(self, which: str = "val", fraction: float = 0.95) -> int:
        """First 1-based epoch that realises ``fraction`` of the total loss decrease.

        The decrease is measured from the first epoch to the minimum of the
        curve. A curve that never decreases plateaus at epoch 1.
        """
        loss = np.asarray(self.val_loss if which == "val" else self.train_loss)
        drop = loss[0] - loss.min()
        if drop <= 0:
            return 1
        target = loss[0] - fraction * drop
        return int(np.flatnonzero(loss <= target)[0]) + 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), 1):
            writer.writerow([e, repr(float(tr)), repr(float(va))])
        return buf.getvalue()

    def save(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def load(cls, path) -> "LearningCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(list(data[:, 1]), list(data[:, 2]))


def _as_array(corpus, dtype) -> np.ndarray:
    if isinstance(corpus, np.ndarray):
        arr = corpus
    else:
        arr = np.stack([getattr(t, "values", t) for t in corpus])
    return np.asarray(arr, dtype=dtype)


def split_indices(n: int, validation_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = int(round(n * validation_fraction))
    return perm[n_val:], perm[:n_val]


def _mean_loss(model: CAEModel, data: np.ndarray, batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(data), batch_size):
        chunk = data[start:start + batch_size]
        total += model.loss(chunk) * len(chunk)
    return total / len(data)


def train(config: CAEConfig, corpus: Sequence | np.ndarray,
          epochs: int | None = None, progress=None) -> tuple[CAEModel, LearningCurve]:
    """Train with Adam on MSE over a seeded 80/20 split.

    Every epoch runs; the returned model holds the parameters from the epoch
    with the lowest validation loss. ``progress``, if given, is called as
    ``progress(epoch, train_loss, val_loss)``.
    """
    data = _as_array(corpus, config.dtype)
    n = len(data)
    minimum = int(np.ceil(config.batch_size / (1 - config.validation_fraction)))
    if n < minimum:
        raise ValueError(f"corpus of {n} tweets is too small; need at least {minimum}")
    if data.shape[1:] != config.input_shape:
        raise ValueError(f"corpus tensors are {data.shape[1:]}, config expects {config.input_shape}")

    init_rng, split_rng = (np.random.default_rng(s) for s in
                           np.random.SeedSequence(config.seed).spawn(2))
    model = CAEModel.initialize(config, init_rng)
    train_idx, val_idx = split_indices(n, config.validation_fraction, split_rng)
    train_data, val_data = data[train_idx], data[val_idx]
    if len(val_data) == 0:
        val_data = train_data

    curve = LearningCurve()
    best = (np.inf, [p.copy() for p in model.params])
    for epoch in range(1, (epochs or config.max_epochs) + 1):
        order = split_rng.permutation(len(train_data))
        running = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = train_data[order[start:start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch)
            adam_step(model, grads)
            running += loss * len(batch)
        curve.train_loss.append(running / len(train_data))
        curve.val_loss.append(_mean_loss(model, val_data, config.batch_size))
        if curve.val_loss[-1] < best[0]:
            best = (curve.val_loss[-1], [p.copy() for p in model.params])
        logger.info("epoch %d train %.6g val %.6g", epoch, curve.train_loss[-1], curve.val_loss[-1])
        if progress is not None:
            progress(epoch, curve.train_loss[-1], curve.val_loss[-1])

    model.params = best[1]
    return model, curve


def featurize(model: CAEModel, corpus, batch_size: int = 256, label: str = "cae") -> FeatureMatrix:
    data = _as_array(corpus, model.config.dtype)
    rows = [model.encode(data[s:s + batch_size]) for s in range(0, len(data), batch_size)]
    return FeatureMatrix(np.concatenate(rows).astype(np.float64), label)
