"""Plain SGD over per-example losses with a halving learning rate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..autodiff import ParamVector
from ..data_io import Example
from ..errors import ConfigError, NumericOverflowError, ZShotError
from .config import ModelConfig
from .kernels import get_kernel
from .network import encode_example
from .params import model_layout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """SGD schedule: the rate at epoch ``e`` is ``lr0 * decay**e``."""

    epochs: int = 15
    lr0: float = 0.5
    decay: float = 0.5
    clip_norm: float | None = 5.0
    backend: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr0 <= 0 or not 0 < self.decay <= 1:
            raise ConfigError("lr0 must be positive and decay in (0, 1]")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or None")

    def learning_rate(self, epoch: int) -> float:
        return self.lr0 * self.decay**epoch


@dataclass
class TrainResult:
    params: ParamVector
    epoch_losses: list[float] = field(default_factory=list)


def clip_gradient(g: np.ndarray, max_norm: float | None) -> float:
    """Rescale ``g`` in place to norm at most ``max_norm``; returns the original norm."""
    norm = float(np.sqrt(g @ g))
    if max_norm is not None and norm > max_norm:
        g *= max_norm / norm
    return norm


def train(
    params: ParamVector,
    examples: Sequence[Example],
    config: ModelConfig,
    schedule: TrainConfig | None = None,
    seed: int = 0,
) -> TrainResult:
    """Train ``params`` on ``examples`` one example at a time.

    Each epoch visits the examples in an order drawn from a generator seeded
    by ``seed``. The returned trace holds the mean pre-update loss of every
    epoch.

    Raises
    ------
    NumericOverflowError
        When a loss or gradient stops being finite; carries the epoch and
        the id of the example being processed.
    """
    schedule = schedule or TrainConfig()
    if not examples:
        raise ZShotError("training set is empty")
    layout = model_layout(config)
    if params.layout != layout:
        raise ZShotError("parameter layout does not match the model config")

    encoded = [encode_example(ex, config) for ex in examples]
    for ex, enc in zip(examples, encoded):
        if enc.domain < 0:
            raise ZShotError(f"example {ex.id!r} has domain {ex.domain!r} outside the model")
    kernel = get_kernel(config, schedule.backend)
    theta = np.array(params.values, dtype=np.float64)
    g = np.empty_like(theta)
    rng = np.random.default_rng(seed)
    trace: list[float] = []

    for epoch in range(schedule.epochs):
        lr = schedule.learning_rate(epoch)
        order = rng.permutation(len(encoded))
        total = 0.0
        for idx in order:
            enc = encoded[idx]
            loss = kernel.loss_and_grad(theta, enc, g)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                raise NumericOverflowError("non-finite loss", example_id=enc.id, epoch=epoch)
            clip_gradient(g, schedule.clip_norm)
            theta -= lr * g
            total += loss
        trace.append(total / len(encoded))
        logger.debug("epoch %d lr %.4g loss %.6f", epoch, lr, trace[-1])

    return TrainResult(params.with_values(theta), trace)
