"""Seeded minibatch training loop shared by the three autoencoders."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..nn import Adam, Tape, Tensor, backward
from ..nn.module import Module
from ..seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch: int = 16
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``state`` holds the last good parameters."""

    def __init__(self, msg: str, state: dict[str, np.ndarray], metrics: list[dict]):
        super().__init__(msg)
        self.state = state
        self.metrics = metrics


def split_indices(n: int, seed: int, train_frac: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 90/10 shuffle split; tiny sets (<= 10) train and validate on everything."""
    if n <= 10:
        idx = np.arange(n)
        return idx, idx
    perm = np.random.default_rng(derive_seed(seed, "split")).permutation(n)
    k = int(round(train_frac * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def fit(
    model: Module,
    batch_loss: Callable[[np.ndarray], Tensor],
    evaluate: Callable[[], dict],
    train_idx: Sequence[int],
    cfg: TrainConfig,
    metrics_path: str | Path | None = None,
    stop: Callable[[dict], bool] | None = None,
) -> list[dict]:
    """Adam over shuffled minibatches of ``train_idx``.

    ``batch_loss(indices)`` builds the loss; ``evaluate()`` returns the
    per-epoch metric row (must include ``val_loss``). The parameters with the
    lowest ``val_loss`` are restored at the end. ``stop(row)`` may end
    training early once a target is met.
    """
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    train_idx = np.asarray(train_idx)
    rows: list[dict] = []
    best, best_state = np.inf, model.state_dict()
    writer = fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "w", newline="")
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = np.random.default_rng(derive_seed(cfg.seed, "epoch", epoch)).permutation(train_idx)
            total, seen = 0.0, 0
            for start in range(0, len(order), cfg.batch):
                chunk = order[start:start + cfg.batch]
                with Tape() as tape:
                    loss = batch_loss(chunk)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}", best_state, rows)
                backward(tape, loss)
                try:
                    opt.step([p.grad for p in params])
                except FloatingPointError as err:
                    raise TrainingDiverged(f"epoch {epoch}: {err}", best_state, rows) from err
                total += value * len(chunk)
                seen += len(chunk)
            row = {"epoch": epoch, "train_loss": total / seen}
            row.update(evaluate())
            rows.append(row)
            if fh is not None:
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=list(row))
                    writer.writeheader()
                writer.writerow({k: _fmt(v) for k, v in row.items()})
                fh.flush()
            log.info("epoch %d %s", epoch, {k: round(float(v), 5) for k, v in row.items() if k != "epoch"})
            if row["val_loss"] < best:
                best, best_state = row["val_loss"], model.state_dict()
            if stop is not None and stop(row):
                break
    finally:
        if fh is not None:
            fh.close()
    model.load_state_dict(best_state)
    return rows


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def batched(n: int, size: int = 64):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))
