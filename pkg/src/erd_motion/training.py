"""Truncated-BPTT training loop with the denoising curriculum."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn_core
from .erd_model import ErdModel, sequence_loss
from .errors import ArgumentError, NumericError
from .mocap_data import NoiseSchedule, make_windows, noise_sigma

log = logging.getLogger(__name__)

STREAMS = ("init", "noise", "shuffle", "sample")


class TrainingDiverged(NumericError):
    def __init__(self, epoch: int, message: str):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {message}")


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for weight init, corruption, shuffling and sampling."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    window_len: int = 100
    stride: int = 50
    batch_size: int = 16
    clip_threshold: float = 25.0
    lr_decay: float = 1.0
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)

    def __post_init__(self):
        if self.epochs < 1 or self.window_len < 1 or self.stride < 1 or self.batch_size < 1:
            raise ArgumentError("epochs, window_len, stride and batch_size must be >= 1")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ArgumentError("need learning_rate > 0 and 0 <= momentum < 1")
        if self.clip_threshold <= 0:
            raise ArgumentError("clip_threshold must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ArgumentError("lr_decay must lie in (0, 1]")


@dataclass
class EpochLog:
    epoch: int
    sigma: float
    loss: float
    clipped_fraction: float


def window_arrays(sequences: Sequence[np.ndarray], window_len: int, stride: int):
    """Stack every training window into ``(W, L, D)`` input and target arrays.

    Sequences shorter than ``window_len + 1`` frames are skipped.
    """
    inputs, targets = [], []
    for seq in sequences:
        if len(seq) < window_len + 1:
            continue
        for x, y in make_windows(seq, window_len, stride):
            inputs.append(x)
            targets.append(y)
    if not inputs:
        raise ArgumentError(f"no sequence is long enough for window_len={window_len}")
    return np.stack(inputs), np.stack(targets)


def evaluate_loss(model: ErdModel, sequences: Sequence[np.ndarray], window_len: int,
                  stride: int) -> float:
    """Mean per-window loss on clean windows, variance padding included."""
    xs, ys = window_arrays(sequences, window_len, stride)
    loss = sequence_loss(model, xs.transpose(1, 0, 2), ys.transpose(1, 0, 2), training=True)
    return float(loss)


def train(model: ErdModel, sequences: Sequence[np.ndarray], cfg: TrainConfig,
          noise_rng: np.random.Generator, shuffle_rng: np.random.Generator,
          on_epoch: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
    """Fit ``model`` to standardized sequences.

    Each minibatch is corrupted with the epoch's noise level, run through
    the network, and the gradient of the next-frame loss on the clean
    targets is clipped and applied with momentum SGD.
    """
    xs, ys = window_arrays(sequences, cfg.window_len, cfg.stride)
    n = xs.shape[0]
    params = model.parameters()
    history = []
    for epoch in range(cfg.epochs):
        sigma = noise_sigma(cfg.noise, epoch, cfg.epochs)
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        order = shuffle_rng.permutation(n)
        total, clipped = 0.0, 0
        batches = range(0, n, cfg.batch_size)
        for start in batches:
            idx = order[start:start + cfg.batch_size]
            x = xs[idx].transpose(1, 0, 2)
            y = ys[idx].transpose(1, 0, 2)
            if sigma > 0:
                x = x + noise_rng.normal(0.0, sigma, size=x.shape)
            try:
                loss = sequence_loss(model, x, y, training=True, backward=True)
                factor = nn_core.clip_gradients(params, cfg.clip_threshold)
            except NumericError as exc:
                raise TrainingDiverged(epoch, str(exc)) from None
            clipped += factor < 1.0
            nn_core.sgd_momentum_step(params, lr, cfg.momentum)
            total += float(loss) * len(idx)
        entry = EpochLog(epoch, sigma, total / n, clipped / len(batches))
        if not np.isfinite(entry.loss):
            raise TrainingDiverged(epoch, "non-finite loss")
        history.append(entry)
        log.debug("epoch %d sigma %.4f loss %.6f", epoch, sigma, entry.loss)
        if on_epoch is not None:
            on_epoch(entry)
    model.reset_state()
    return history
