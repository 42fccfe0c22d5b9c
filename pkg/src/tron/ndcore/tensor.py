"""Float64 tensors, named parameters, and the backward tape.

All numeric state lives in contiguous row-major float64 numpy arrays.
Reverse-mode differentiation is deliberately minimal: each forward
operation may register one backward closure on the active tape, and
``Tape.backward`` replays the closures in reverse registration order.
There is no general graph; the set of differentiable operations is
exactly what the layers in this package need.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator

import numpy as np

from tron.errors import DimensionError


def _as_f64(data) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    return arr


class Tensor:
    """A dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def accumulate_grad(self, delta: np.ndarray) -> None:
        self.ensure_grad()
        self.grad += delta

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A trainable tensor with a hierarchical name and an always-live grad."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Records backward closures during a forward pass."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._ops.append(backward_fn)

    def backward(self, loss: Tensor) -> None:
        """Seed ``loss`` with a unit gradient and replay in reverse."""
        if loss.data.size != 1:
            raise DimensionError(
                f"backward requires a scalar loss, got shape {loss.data.shape}"
            )
        loss.ensure_grad()
        loss.grad.fill(0.0)
        loss.grad += 1.0
        for fn in reversed(self._ops):
            fn()
        self._ops.clear()


_ACTIVE: Tape | None = None


def active_tape() -> Tape | None:
    return _ACTIVE


@contextlib.contextmanager
def record() -> Iterator[Tape]:
    """Activate a fresh tape for the duration of the block.

    Forward operations run outside any ``record()`` block compute values
    only, which is the inference path.
    """
    global _ACTIVE
    prev = _ACTIVE
    tape = Tape()
    _ACTIVE = tape
    try:
        yield tape
    finally:
        _ACTIVE = prev
