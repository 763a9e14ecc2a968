"""Optimization loop: adaptive moment estimation, seeded shuffling,
checkpointing, loss logging, threshold fitting."""

from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tfad import checkpoint, scoring
from tfad.branches import EVAL, Mode, Model
from tfad.tensor import NonFiniteError, Tape, Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 2e-4
    epochs: int = 120
    batch_size: int = 8
    seed: int = 0
    grad_clip: float | None = None
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class Adam:
    """Standard adaptive-moment update with bias correction."""

    def __init__(
        self,
        params: "OrderedDict[str, Tensor]",
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], grad_clip: float | None = None) -> None:
        for name in self.params:
            g = grads[name]
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        if grad_clip is not None:
            norm = float(np.sqrt(sum(float((grads[n] ** 2).sum()) for n in self.params)))
            if norm > grad_clip:
                scale = grad_clip / norm
                grads = {n: grads[n] * scale for n in self.params}
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(optimizer: Adam, grads: dict[str, np.ndarray], grad_clip: float | None = None) -> None:
    optimizer.step(grads, grad_clip)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    l1: float
    l2: float
    l3: float
    alphas: tuple[float, float, float]


@dataclass
class TrainResult:
    history: list[EpochStats]
    tau: float
    alphas: np.ndarray
    train_scores: np.ndarray  # flattened per-element training score samples


def _loss_weights(model: Model) -> scoring.LossWeights:
    active = {
        "both": (True, True, True),
        "time": (True, False, False),
        "freq": (False, True, True),
    }[model.cfg.branches]
    return scoring.LossWeights(logits=model.loss_logits, active=active)


def _forward_scores(model: Model, windows: np.ndarray, adj: np.ndarray, batch_size: int) -> np.ndarray:
    """Eval-mode score maps for every window: [num, N, M, W]."""
    weights = _loss_weights(model)
    maps = []
    for i in range(0, windows.shape[0], batch_size):
        out = model.forward(windows[i : i + batch_size], adj, EVAL)
        _, smap = scoring.recon_losses(out, windows[i : i + batch_size], weights)
        maps.append(smap)
    return np.concatenate(maps, axis=0)


def train_loop(
    model: Model,
    windows: np.ndarray,
    adj: np.ndarray,
    cfg: TrainConfig,
    threshold_method: str = "percentile",
    threshold_param: float = 99.0,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train on [num, N, W, M] windows; fully deterministic given the seed.

    Per epoch: seeded shuffle, forward, weighted total loss, backward, one
    optimizer step per batch. Aborts on any non-finite loss. After the last
    epoch the threshold is fitted on evaluation-mode training scores.
    """
    if windows.ndim != 4:
        raise ValueError("windows must be [num, N, W, M]")
    num = windows.shape[0]
    seq = np.random.SeedSequence(cfg.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    weights = _loss_weights(model)
    trainable = model.store.trainable()
    optimizer = Adam(trainable, cfg.lr)
    mode = Mode(training=True, rng=dropout_rng)
    history: list[EpochStats] = []
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(num)
        total_sum = 0.0
        part_sums = np.zeros(3)
        for step, start in enumerate(range(0, num, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            batch = windows[idx]
            with Tape(list(trainable.values())) as tape:
                out = model.forward(batch, adj, mode)
                losses, _ = scoring.recon_losses(out, batch, weights)
                total = scoring.total_score(losses, weights)
            loss_val = total.item()
            if not np.isfinite(loss_val):
                raise NonFiniteError(f"non-finite loss at epoch {epoch} step {step}")
            grads = tape.backward(total)
            optimizer.step(grads, cfg.grad_clip)
            total_sum += loss_val * len(idx)
            part_sums += np.array(losses.values()) * len(idx)
        stats = EpochStats(
            epoch=epoch,
            mean_loss=total_sum / num,
            l1=part_sums[0] / num,
            l2=part_sums[1] / num,
            l3=part_sums[2] / num,
            alphas=tuple(weights.alpha_values()),
        )
        history.append(stats)
        log.info(
            "epoch %d loss %.6f (l1 %.4f l2 %.4f l3 %.4f)",
            epoch, stats.mean_loss, stats.l1, stats.l2, stats.l3,
        )
        if ckpt_dir is not None and (
            epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs
        ):
            checkpoint.save(ckpt_dir / f"checkpoint_{epoch:04d}.temd", model.store)

    train_maps = _forward_scores(model, windows, adj, cfg.batch_size)
    tau = scoring.fit_threshold(train_maps.ravel(), threshold_method, threshold_param)
    return TrainResult(
        history=history,
        tau=tau,
        alphas=_loss_weights(model).alpha_values(),
        train_scores=train_maps.ravel(),
    )


def write_history_csv(path: str | Path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_loss", "l1", "l2", "l3", "alpha1", "alpha2", "alpha3"])
        for row in history:
            writer.writerow(
                [row.epoch, repr(row.mean_loss), repr(row.l1), repr(row.l2), repr(row.l3)]
                + [repr(a) for a in row.alphas]
            )
