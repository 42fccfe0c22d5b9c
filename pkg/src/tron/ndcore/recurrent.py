"""Stacked GRU/LSTM cells with exact backpropagation through time.

Conventions (fixed; they determine the per-layer parameter count
G*H*(I+H) + 2*G*H with two separate bias vectors per gate group):

* GRU gate groups are ordered (reset, update, candidate). The reset gate
  multiplies the recurrent contribution of the candidate *after* the
  recurrent matmul-plus-bias: n = tanh(gx_n + r * (h @ Whh_n.T + bhh_n)).
* LSTM gate groups are ordered (input, forget, candidate, output).

``unroll`` runs the full stack over a sequence and returns the last
layer's hidden state at the final step; its backward pass is full BPTT
with no truncation. The input-path matmul of each layer is batched over
all time steps, so only the recurrent matmul is sequential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tron.errors import DimensionError, EmptySequenceError
from tron.ndcore.ops import sigmoid
from tron.ndcore.tensor import Parameter, Tensor, active_tape

GATE_COUNTS = {"gru": 3, "lstm": 4}


@dataclass
class RecurrentLayerWeights:
    """One recurrent layer: input/recurrent matrices plus two bias vectors."""

    input_weights: Parameter      # (G*H, I)
    recurrent_weights: Parameter  # (G*H, H)
    input_bias: Parameter         # (G*H,)
    recurrent_bias: Parameter     # (G*H,)

    def __post_init__(self):
        gh, i = self.input_weights.data.shape
        gh2, h = self.recurrent_weights.data.shape
        if gh != gh2 or gh % h != 0 or gh // h not in (3, 4):
            raise DimensionError(
                f"inconsistent recurrent weight shapes {self.input_weights.data.shape} "
                f"and {self.recurrent_weights.data.shape}"
            )
        if self.input_bias.data.shape != (gh,) or self.recurrent_bias.data.shape != (gh,):
            raise DimensionError("recurrent bias shapes must be (G*H,)")

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.data.shape[1]

    @property
    def input_size(self) -> int:
        return self.input_weights.data.shape[1]

    @property
    def gates(self) -> int:
        return self.input_weights.data.shape[0] // self.hidden_size

    def param_count(self) -> int:
        g, h, i = self.gates, self.hidden_size, self.input_size
        return g * h * (i + h) + 2 * g * h

    def params(self) -> list[Parameter]:
        return [self.input_weights, self.recurrent_weights,
                self.input_bias, self.recurrent_bias]


def init_recurrent_layer(kind: str, input_size: int, hidden: int,
                         rng: np.random.Generator, name: str) -> RecurrentLayerWeights:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor."""
    g = GATE_COUNTS[kind]
    s_in = 1.0 / np.sqrt(input_size)
    s_rec = 1.0 / np.sqrt(hidden)
    return RecurrentLayerWeights(
        input_weights=Parameter(
            rng.uniform(-s_in, s_in, (g * hidden, input_size)), f"{name}.w_ih"),
        recurrent_weights=Parameter(
            rng.uniform(-s_rec, s_rec, (g * hidden, hidden)), f"{name}.w_hh"),
        input_bias=Parameter(rng.uniform(-s_in, s_in, g * hidden), f"{name}.b_ih"),
        recurrent_bias=Parameter(rng.uniform(-s_rec, s_rec, g * hidden), f"{name}.b_hh"),
    )


# -- raw cell kernels (pure arrays; shared by the step ops and unroll) --

def _gru_cell(gx, gh, h):
    hsz = h.shape[1]
    r = sigmoid(gx[:, :hsz] + gh[:, :hsz])
    z = sigmoid(gx[:, hsz:2 * hsz] + gh[:, hsz:2 * hsz])
    ghn = gh[:, 2 * hsz:]
    n = np.tanh(gx[:, 2 * hsz:] + r * ghn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (r, z, n, ghn)


def _gru_cell_backward(dh_new, cache, h_prev):
    """Returns (dgx, dgh, dh_direct); caller adds dgh @ Whh to dh_direct."""
    r, z, n, ghn = cache
    dz = dh_new * (h_prev - n) * z * (1.0 - z)
    dan = dh_new * (1.0 - z) * (1.0 - n * n)
    dr = dan * ghn * r * (1.0 - r)
    dgx = np.concatenate([dr, dz, dan], axis=1)
    dgh = np.concatenate([dr, dz, dan * r], axis=1)
    return dgx, dgh, dh_new * z


def _lstm_cell(a, c):
    hsz = c.shape[1]
    i = sigmoid(a[:, :hsz])
    f = sigmoid(a[:, hsz:2 * hsz])
    g = np.tanh(a[:, 2 * hsz:3 * hsz])
    o = sigmoid(a[:, 3 * hsz:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, g, o, tc)


def _lstm_cell_backward(dh_new, dc_in, cache, c_prev):
    """Returns (da, dc_prev); gate grads feed both weight paths identically."""
    i, f, g, o, tc = cache
    do = dh_new * tc * o * (1.0 - o)
    dc = dc_in + dh_new * o * (1.0 - tc * tc)
    di = dc * g * i * (1.0 - i)
    df = dc * c_prev * f * (1.0 - f)
    dg = dc * i * (1.0 - g * g)
    da = np.concatenate([di, df, dg, do], axis=1)
    return da, dc * f


def _check_step_shapes(x: Tensor, h: Tensor, w: RecurrentLayerWeights,
                       kind: str) -> None:
    if w.gates != GATE_COUNTS[kind]:
        raise DimensionError(
            f"{kind} step got weights with {w.gates} gate groups")
    if x.data.ndim != 2 or h.data.ndim != 2:
        raise DimensionError("step inputs must be 2-D (batch, width)")
    if x.data.shape[1] != w.input_size:
        raise DimensionError(
            f"step input width {x.data.shape[1]} != weight input size {w.input_size}")
    if h.data.shape != (x.data.shape[0], w.hidden_size):
        raise DimensionError(
            f"hidden state shape {h.data.shape} does not match "
            f"(batch={x.data.shape[0]}, hidden={w.hidden_size})")


def gru_step(x: Tensor, h: Tensor, w: RecurrentLayerWeights) -> Tensor:
    """One GRU step; registers exact gradients for x, h, and all six groups."""
    _check_step_shapes(x, h, w, "gru")
    gx = x.data @ w.input_weights.data.T + w.input_bias.data
    gh = h.data @ w.recurrent_weights.data.T + w.recurrent_bias.data
    h_new, cache = _gru_cell(gx, gh, h.data)
    out = Tensor(h_new)

    tape = active_tape()
    if tape is not None:
        h_prev = h.data.copy()
        x_in = x.data.copy()

        def _backward():
            g = out.grad
            if g is None:
                return
            dgx, dgh, dh_direct = _gru_cell_backward(g, cache, h_prev)
            w.input_weights.accumulate_grad(dgx.T @ x_in)
            w.input_bias.accumulate_grad(dgx.sum(axis=0))
            w.recurrent_weights.accumulate_grad(dgh.T @ h_prev)
            w.recurrent_bias.accumulate_grad(dgh.sum(axis=0))
            x.accumulate_grad(dgx @ w.input_weights.data)
            h.accumulate_grad(dh_direct + dgh @ w.recurrent_weights.data)

        tape.record(_backward)
    return out


def lstm_step(x: Tensor, state: tuple[Tensor, Tensor],
              w: RecurrentLayerWeights) -> tuple[Tensor, Tensor]:
    """One LSTM step on (h, c); returns (h', c') with exact gradients."""
    h, c = state
    _check_step_shapes(x, h, w, "lstm")
    if c.data.shape != h.data.shape:
        raise DimensionError(
            f"cell state shape {c.data.shape} != hidden shape {h.data.shape}")
    a = (x.data @ w.input_weights.data.T + w.input_bias.data
         + h.data @ w.recurrent_weights.data.T + w.recurrent_bias.data)
    h_new, c_new, cache = _lstm_cell(a, c.data)
    out_h = Tensor(h_new)
    out_c = Tensor(c_new)

    tape = active_tape()
    if tape is not None:
        h_prev = h.data.copy()
        c_prev = c.data.copy()
        x_in = x.data.copy()

        def _backward():
            dh = out_h.grad if out_h.grad is not None else np.zeros_like(h_new)
            dc_in = out_c.grad if out_c.grad is not None else np.zeros_like(c_new)
            da, dc_prev = _lstm_cell_backward(dh, dc_in, cache, c_prev)
            w.input_weights.accumulate_grad(da.T @ x_in)
            w.input_bias.accumulate_grad(da.sum(axis=0))
            w.recurrent_weights.accumulate_grad(da.T @ h_prev)
            w.recurrent_bias.accumulate_grad(da.sum(axis=0))
            x.accumulate_grad(da @ w.input_weights.data)
            h.accumulate_grad(da @ w.recurrent_weights.data)
            c.accumulate_grad(dc_prev)

        tape.record(_backward)
    return out_h, out_c


def unroll(seq: Tensor, layers: list[RecurrentLayerWeights], kind: str) -> Tensor:
    """Run a recurrent stack over (B, T, I); return last layer's final state.

    Zero initial states. The backward closure performs full BPTT through
    every step of every layer, with weight-gradient matmuls batched over
    time for speed.
    """
    if kind not in GATE_COUNTS:
        raise ValueError(f"unknown recurrent kind {kind!r}")
    if not layers:
        raise DimensionError("unroll requires at least one layer")
    if seq.data.ndim != 3:
        raise DimensionError(f"sequence must be (B, T, I), got {seq.data.shape}")
    batch, steps, width = seq.data.shape
    if steps == 0:
        raise EmptySequenceError("cannot unroll an empty sequence (T=0)")
    hsz = layers[0].hidden_size
    for idx, w in enumerate(layers):
        if w.gates != GATE_COUNTS[kind]:
            raise DimensionError(f"layer {idx} has {w.gates} gate groups, not {kind}")
        expect_in = width if idx == 0 else hsz
        if w.input_size != expect_in or w.hidden_size != hsz:
            raise DimensionError(
                f"layer {idx} expects input {expect_in} and hidden {hsz}, "
                f"got ({w.input_size}, {w.hidden_size})")

    is_lstm = kind == "lstm"
    x_stack = np.ascontiguousarray(seq.data.transpose(1, 0, 2))  # (T, B, I)
    layer_caches = []
    for w in layers:
        gsz = w.gates * hsz
        gx_all = x_stack.reshape(steps * batch, -1) @ w.input_weights.data.T
        gx_all += w.input_bias.data
        gx_all = gx_all.reshape(steps, batch, gsz)
        h_all = np.zeros((steps + 1, batch, hsz))
        caches = []
        if is_lstm:
            c_all = np.zeros((steps + 1, batch, hsz))
            for t in range(steps):
                a = gx_all[t] + h_all[t] @ w.recurrent_weights.data.T
                a += w.recurrent_bias.data
                h_all[t + 1], c_all[t + 1], cache = _lstm_cell(a, c_all[t])
                caches.append(cache)
            layer_caches.append((x_stack, h_all, c_all, caches))
        else:
            for t in range(steps):
                gh = h_all[t] @ w.recurrent_weights.data.T
                gh += w.recurrent_bias.data
                h_all[t + 1], cache = _gru_cell(gx_all[t], gh, h_all[t])
                caches.append(cache)
            layer_caches.append((x_stack, h_all, None, caches))
        x_stack = h_all[1:]

    out = Tensor(layer_caches[-1][1][-1].copy())

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            d_top = np.zeros((steps, batch, hsz))
            d_top[-1] = g
            d_in = d_top
            for w, (x_in, h_all, c_all, caches) in zip(
                    reversed(layers), reversed(layer_caches)):
                gsz = w.gates * hsz
                dgx_all = np.empty((steps, batch, gsz))
                dh_carry = np.zeros((batch, hsz))
                if is_lstm:
                    dc_carry = np.zeros((batch, hsz))
                    for t in range(steps - 1, -1, -1):
                        dh = d_in[t] + dh_carry
                        da, dc_carry = _lstm_cell_backward(
                            dh, dc_carry, caches[t], c_all[t])
                        dgx_all[t] = da
                        dh_carry = da @ w.recurrent_weights.data
                    dgh_flat = dgx_all.reshape(steps * batch, gsz)
                else:
                    dgh_all = np.empty((steps, batch, gsz))
                    for t in range(steps - 1, -1, -1):
                        dh = d_in[t] + dh_carry
                        dgx, dgh, dh_direct = _gru_cell_backward(
                            dh, caches[t], h_all[t])
                        dgx_all[t] = dgx
                        dgh_all[t] = dgh
                        dh_carry = dh_direct + dgh @ w.recurrent_weights.data
                    dgh_flat = dgh_all.reshape(steps * batch, gsz)
                dgx_flat = dgx_all.reshape(steps * batch, gsz)
                w.input_weights.accumulate_grad(
                    dgx_flat.T @ x_in.reshape(steps * batch, -1))
                w.input_bias.accumulate_grad(dgx_flat.sum(axis=0))
                w.recurrent_weights.accumulate_grad(
                    dgh_flat.T @ h_all[:-1].reshape(steps * batch, hsz))
                w.recurrent_bias.accumulate_grad(dgh_flat.sum(axis=0))
                d_in = (dgx_flat @ w.input_weights.data).reshape(
                    steps, batch, -1)
            seq.accumulate_grad(d_in.transpose(1, 0, 2))

        tape.record(_backward)
    return out
