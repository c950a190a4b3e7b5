"""Per-entry value payloads trained by plain gradient descent with early stopping.

The payload is a vector ``v`` regressed onto a per-edit target vector under
``L(v) = 0.5 * ||v - target||^2``. Training stops when the loss falls to the
threshold, fails to improve for ``patience`` consecutive steps, or the step
budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NonFiniteLoss
from .geometry import as_vector

Label = Union[str, int]


@dataclass(frozen=True)
class AdaptorConfig:
    learning_rate: float = 0.1
    max_steps: int = 50
    loss_threshold: float = 1e-2
    patience: int = 3

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_steps < 1 or self.patience < 1:
            raise InvalidConfig("max_steps and patience must be >= 1")
        if not self.loss_threshold > 0:
            raise InvalidConfig(f"loss_threshold must be > 0, got {self.loss_threshold}")


@dataclass
class Payload:
    """Trainable value vector attached to one codebook entry.

    ``trained`` is True only when ``final_loss`` reached the threshold.
    """

    value: np.ndarray
    trained: bool = False
    final_loss: float = math.inf
    steps_used: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "Payload":
        return cls(np.zeros(dim))


@dataclass(frozen=True)
class EditTarget:
    label: Label
    target_vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "target_vector", as_vector(self.target_vector, "target_vector"))


def payload_loss(value: np.ndarray, target_vector: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        diff = value - target_vector
        return 0.5 * float(diff @ diff)


def train_payload(init: Payload, target: EditTarget, cfg: AdaptorConfig) -> Payload:
    """Fit ``init.value`` to ``target.target_vector``; ``init`` is not modified.

    Raises:
        NonFiniteLoss: when the loss turns NaN/Inf (learning rate far too large).
    """
    t = target.target_vector
    v = np.array(init.value, dtype=np.float64)
    if v.shape != t.shape:
        raise DimensionMismatch(f"payload has shape {v.shape}, target {t.shape}")

    loss = payload_loss(v, t)
    if not math.isfinite(loss):
        raise NonFiniteLoss("initial payload loss is not finite")
    steps = 0
    best, stale = loss, 0
    while loss > cfg.loss_threshold and steps < cfg.max_steps:
        v -= cfg.learning_rate * (v - t)
        steps += 1
        loss = payload_loss(v, t)
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"payload loss diverged at step {steps} (lr={cfg.learning_rate})")
        if loss < best:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return Payload(v, trained=loss <= cfg.loss_threshold, final_loss=loss, steps_used=steps)


def evaluate_payload(p: Payload, target: EditTarget) -> float:
    return payload_loss(np.asarray(p.value, dtype=np.float64), target.target_vector)
