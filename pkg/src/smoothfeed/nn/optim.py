"""Adam updates and the hold-then-exponential-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import NonFiniteError, Parameter


@dataclass(frozen=True)
class LrSchedule:
    """Constant for `hold_steps`, then multiplied by `decay_rate` once per
    `decay_interval` steps."""

    initial: float
    hold_steps: int = 50
    decay_rate: float = 0.98
    decay_interval: int = 50

    def __post_init__(self):
        if self.initial <= 0:
            raise ValueError("initial lr must be positive")
        if not (0 < self.decay_rate <= 1):
            raise ValueError("decay_rate must be in (0, 1]")
        if self.decay_interval <= 0:
            raise ValueError("decay_interval must be positive")
        if self.hold_steps < 0:
            raise ValueError("hold_steps must be non-negative")

    def at(self, step: int) -> float:
        if step < self.hold_steps:
            return self.initial
        n_decays = 1 + (step - self.hold_steps) // self.decay_interval
        return self.initial * self.decay_rate ** n_decays


def adam_step(params: Iterable[Parameter] | Sequence[Parameter], lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """One standard Adam update; increments steps and zeroes gradients.

    Aborts before touching any state if a gradient is non-finite, naming
    the offending parameter.
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
    b1, b2 = betas
    for p in params:
        p.step += 1
        t = p.step
        p.adam_m *= b1
        p.adam_m += (1.0 - b1) * p.grad
        p.adam_v *= b2
        p.adam_v += (1.0 - b2) * np.square(p.grad)
        m_hat = p.adam_m / (1.0 - b1 ** t)
        v_hat = p.adam_v / (1.0 - b2 ** t)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype, copy=False)
        p.zero_grad()
