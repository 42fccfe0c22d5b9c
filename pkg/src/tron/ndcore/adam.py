"""Bias-corrected Adam over a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from tron.errors import DimensionError, NonFiniteGradientError


@dataclass
class AdamState:
    """Optimizer moments aligned with a flat parameter vector."""

    size: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: np.ndarray = field(default=None)
    second_moment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.size)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.size)
        if self.first_moment.shape != (self.size,) or \
                self.second_moment.shape != (self.size,):
            raise DimensionError("moment vectors must match the parameter vector")


def adam_step(values: np.ndarray, grads: np.ndarray, state: AdamState,
              name_of: Callable[[int], str] | None = None) -> np.ndarray:
    """One Adam update; returns new values and advances ``state`` in place.

    ``name_of`` maps a flat index to a parameter name for error reporting.
    """
    if values.shape != grads.shape or values.shape != (state.size,):
        raise DimensionError(
            f"adam_step misaligned: values {values.shape}, grads {grads.shape}, "
            f"state size {state.size}")
    if not np.all(np.isfinite(grads)):
        idx = int(np.flatnonzero(~np.isfinite(grads))[0])
        where = name_of(idx) if name_of is not None else f"flat index {idx}"
        raise NonFiniteGradientError(
            f"non-finite gradient element at {where} (step {state.step + 1})")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.first_moment *= b1
    state.first_moment += (1.0 - b1) * grads
    state.second_moment *= b2
    state.second_moment += (1.0 - b2) * grads * grads
    m_hat = state.first_moment / (1.0 - b1 ** state.step)
    v_hat = state.second_moment / (1.0 - b2 ** state.step)
    return values - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
