"""Differentiable primitives: dense layers, layer norm, MSE, elementwise ops.

Every operation validates shapes, computes the forward value, and (when a
tape is active) registers a closure that accumulates exact gradients into
its inputs. Reductions use numpy's fixed evaluation order, so repeated
runs on identical inputs are bitwise identical.
"""

from __future__ import annotations

import numpy as np

from tron.errors import DegenerateNormalizationError, DimensionError
from tron.ndcore.tensor import Parameter, Tensor, active_tape

ACTIVATIONS = ("relu", "identity")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh-based form is exact and overflow-free on both tails
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _check_2d(t: Tensor, name: str) -> None:
    if t.data.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {t.data.shape}")


def dense_forward(x: Tensor, w: Parameter, b: Parameter, activation: str) -> Tensor:
    """y = act(x @ w.T + b) for w of shape (out, in) and b of shape (out,)."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    _check_2d(x, "x")
    _check_2d(w, "w")
    n_out, n_in = w.data.shape
    if x.data.shape[1] != n_in:
        raise DimensionError(
            f"dense input width {x.data.shape[1]} does not match weight "
            f"{w.name} input size {n_in}"
        )
    if b.data.shape != (n_out,):
        raise DimensionError(
            f"dense bias {b.name} has shape {b.data.shape}, expected ({n_out},)"
        )

    z = x.data @ w.data.T
    z += b.data
    if activation == "relu":
        out_data = np.maximum(z, 0.0)
    else:
        out_data = z
    out = Tensor(out_data)

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            if activation == "relu":
                dz = np.where(z > 0.0, g, 0.0)
            else:
                dz = g
            w.accumulate_grad(dz.T @ x.data)
            b.accumulate_grad(dz.sum(axis=0))
            x.accumulate_grad(dz @ w.data)

        tape.record(_backward)
    return out


def layer_norm(x: Tensor, gamma: Parameter, beta: Parameter, eps: float = 1e-5) -> Tensor:
    """Per-row standardization (population variance) followed by affine scale."""
    _check_2d(x, "x")
    n_feat = x.data.shape[1]
    if n_feat < 2:
        raise DegenerateNormalizationError(
            f"layer_norm needs at least 2 features, got {n_feat}"
        )
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if gamma.data.shape != (n_feat,) or beta.data.shape != (n_feat,):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match feature width {n_feat}"
        )

    mean = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mean
    var = np.mean(centered * centered, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out = Tensor(x_hat * gamma.data + beta.data)

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            gamma.accumulate_grad((g * x_hat).sum(axis=0))
            beta.accumulate_grad(g.sum(axis=0))
            gh = g * gamma.data
            # dx for standardization with population variance
            m1 = gh.mean(axis=1, keepdims=True)
            m2 = (gh * x_hat).mean(axis=1, keepdims=True)
            x.accumulate_grad(inv_std * (gh - m1 - x_hat * m2))

        tape.record(_backward)
    return out


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements jointly."""
    if pred.data.shape != target.data.shape:
        raise DimensionError(
            f"mse shapes differ: pred {pred.data.shape} vs target {target.data.shape}"
        )
    diff = pred.data - target.data
    count = diff.size
    out = Tensor(np.array(np.sum(diff * diff) / count))

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            scale = float(g.reshape(())) * 2.0 / count
            pred.accumulate_grad(scale * diff)
            target.accumulate_grad(-scale * diff)

        tape.record(_backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise DimensionError(
            f"mul shapes differ: {a.data.shape} vs {b.data.shape}"
        )
    out = Tensor(a.data * b.data)

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            a.accumulate_grad(g * b.data)
            b.accumulate_grad(g * a.data)

        tape.record(_backward)
    return out


def add_rowvec(x: Tensor, v: Parameter) -> Tensor:
    """Add a length-W vector to every row of a (B, W) tensor."""
    _check_2d(x, "x")
    if v.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"row vector {v.name} shape {v.data.shape} does not match "
            f"width {x.data.shape[1]}"
        )
    out = Tensor(x.data + v.data)

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            x.accumulate_grad(g)
            v.accumulate_grad(g.sum(axis=0))

        tape.record(_backward)
    return out
