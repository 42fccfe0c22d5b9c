"""Minimal deterministic numerics: float64 layers with exact reverse-mode
gradients, Adam, and a finite-difference gradient checker."""

from tron.ndcore.adam import AdamState, adam_step
from tron.ndcore.gradcheck import GradCheckReport, grad_check
from tron.ndcore.ops import add_rowvec, dense_forward, layer_norm, mse, mul, sigmoid
from tron.ndcore.recurrent import (
    GATE_COUNTS,
    RecurrentLayerWeights,
    gru_step,
    init_recurrent_layer,
    lstm_step,
    unroll,
)
from tron.ndcore.tensor import Parameter, Tape, Tensor, active_tape, record

__all__ = [
    "AdamState", "adam_step", "GradCheckReport", "grad_check",
    "add_rowvec", "dense_forward", "layer_norm", "mse", "mul", "sigmoid",
    "GATE_COUNTS", "RecurrentLayerWeights", "gru_step", "init_recurrent_layer",
    "lstm_step", "unroll",
    "Parameter", "Tape", "Tensor", "active_tape", "record",
]
