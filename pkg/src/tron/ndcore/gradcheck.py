"""Central finite-difference verification of analytic gradients.

The checker is the independent oracle for every backward pass in this
package: it perturbs each parameter element by +/- step, re-evaluates the
loss, and compares the slope against the gradient produced by the tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from tron.ndcore.tensor import Parameter, Tensor, record


@dataclass
class GradCheckReport:
    per_param: dict[str, float]   # max relative error per parameter
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _rel_err(analytic: float, numeric: float) -> float:
    # scale-aware: relative for large gradients, absolute near zero
    denom = max(abs(analytic), abs(numeric), 1.0)
    return abs(analytic - numeric) / denom


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
               tolerance: float = 1e-5, step: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of a deterministic scalar ``loss_fn``.

    ``loss_fn`` must recompute the forward pass from the current parameter
    values on every call. Parameter values are restored bit-exactly.
    """
    for p in params:
        p.zero_grad()
    with record() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    per_param: dict[str, float] = {}
    worst = 0.0
    for p, a_grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a_grad.reshape(-1)
        worst_here = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            x_up = flat[i]
            up = loss_fn().item()
            flat[i] = orig - step
            x_down = flat[i]
            down = loss_fn().item()
            flat[i] = orig
            # divide by the step actually applied after rounding
            numeric = (up - down) / (x_up - x_down)
            err = _rel_err(float(a_flat[i]), numeric)
            if err > worst_here:
                worst_here = err
        per_param[p.name] = worst_here
        if worst_here > worst:
            worst = worst_here
    return GradCheckReport(per_param=per_param, max_rel_err=worst,
                           tolerance=tolerance)
