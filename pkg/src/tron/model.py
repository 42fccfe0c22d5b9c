"""The operator model family: recurrent branch encoders plus a spatial trunk.

Five variants share one trunk design and a scalar output bias:

* ``S-GRU`` / ``S-LSTM``: all sensor channels enter one recurrent stack;
  the final hidden state is layer-normalized and projected to the latent
  width. The joint encoding preserves cross-sensor correlations.
* ``M-GRU`` / ``M-LSTM``: one recurrent stack per sensor (input size 1),
  each with its own layer norm and projection head; the per-sensor
  latents are fused by elementwise multiplication plus a learnable
  latent-width fusion bias.
* ``FNN``: a static four-layer dense branch over the flattened window,
  hidden sizes (64, 64, 64, latent).

The trunk maps normalized (lon, lat) queries through three dense layers
(2 -> hd ReLU, hd -> hd ReLU, hd -> hd linear). Output at query j for
sample i is the inner product of branch and trunk latents plus the scalar
bias. Inference is resolution-agnostic: the branch latent never depends
on the query set.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from tron.errors import ConfigError, DimensionError
from tron.ndcore import (
    GATE_COUNTS,
    Parameter,
    RecurrentLayerWeights,
    Tensor,
    active_tape,
    add_rowvec,
    dense_forward,
    init_recurrent_layer,
    layer_norm,
    mul,
    unroll,
)

VARIANTS = ("S-GRU", "S-LSTM", "M-GRU", "M-LSTM", "FNN")
FNN_HIDDEN = (64, 64, 64)
LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    seq_len: int
    n_sensors: int
    hidden: int = 128
    n_layers: int = 4
    hd: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for field_name in ("seq_len", "n_sensors", "hidden", "n_layers", "hd"):
            if getattr(self, field_name) < 1:
                raise ConfigError(f"{field_name} must be >= 1")

    @property
    def kind(self) -> str:
        if self.variant in ("S-GRU", "M-GRU"):
            return "gru"
        if self.variant in ("S-LSTM", "M-LSTM"):
            return "lstm"
        return "fnn"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass
class QueryGrid:
    """Spatial query points, normalized per axis to [0, 1] as (lon, lat)."""

    coords: np.ndarray
    lon_deg: np.ndarray | None = None
    lat_deg: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2 or self.coords.shape[0] < 1:
            raise DimensionError(
                f"query coordinates must be (P, 2) with P >= 1, got {self.coords.shape}")

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]


def fuse(b: Tensor, t: Tensor, beta: Parameter) -> Tensor:
    """X[i, j] = sum_k b[i, k] * t[j, k] + beta."""
    if b.data.ndim != 2 or t.data.ndim != 2 or b.data.shape[1] != t.data.shape[1]:
        raise DimensionError(
            f"latent widths differ: branch {b.data.shape} vs trunk {t.data.shape}")
    out = Tensor(b.data @ t.data.T + beta.data[0])

    tape = active_tape()
    if tape is not None:
        def _backward():
            g = out.grad
            if g is None:
                return
            b.accumulate_grad(g @ t.data)
            t.accumulate_grad(g.T @ b.data)
            beta.accumulate_grad(np.array([g.sum()]))

        tape.record(_backward)
    return out


def _branch_stack_counts(kind: str, input_size: int, hidden: int,
                         n_layers: int, hd: int) -> int:
    g = GATE_COUNTS[kind]
    total = 0
    for i in range(n_layers):
        fan_in = input_size if i == 0 else hidden
        total += g * hidden * (fan_in + hidden) + 2 * g * hidden
    total += 2 * hidden            # layer norm gamma + beta
    total += hd * hidden + hd      # projection head
    return total


def param_count(config: ModelConfig) -> int:
    """Closed-form count of scalar trainable parameters for a variant."""
    hd = config.hd
    trunk = (hd * 2 + hd) + 2 * (hd * hd + hd)
    if config.variant == "FNN":
        widths = (config.seq_len * config.n_sensors,) + FNN_HIDDEN + (hd,)
        branch = sum(widths[i + 1] * widths[i] + widths[i + 1]
                     for i in range(len(widths) - 1))
        return branch + trunk + 1
    if config.variant.startswith("S-"):
        branch = _branch_stack_counts(config.kind, config.n_sensors,
                                      config.hidden, config.n_layers, hd)
        return branch + trunk + 1
    per_sensor = _branch_stack_counts(config.kind, 1, config.hidden,
                                      config.n_layers, hd)
    return config.n_sensors * per_sensor + hd + trunk + 1


class TronModel:
    """Parameterized branch(es) + trunk + scalar output bias.

    Parameters are registered in a fixed order (branches, trunk, output
    bias), which defines the flat-vector layout used by the optimizer and
    the checkpoint format. Immutable during inference; training mutates
    parameter values in place and requires exclusive access.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self._params: list[Parameter] = []
        rng = np.random.default_rng(seed)

        self._stacks: list[list[RecurrentLayerWeights]] = []
        self._norms: list[tuple[Parameter, Parameter]] = []
        self._heads: list[tuple[Parameter, Parameter]] = []
        self._fnn_layers: list[tuple[Parameter, Parameter]] = []
        self.fusion_bias: Parameter | None = None

        if config.kind == "fnn":
            widths = (config.seq_len * config.n_sensors,) + FNN_HIDDEN + (config.hd,)
            for i in range(len(widths) - 1):
                self._fnn_layers.append(self._dense(rng, widths[i], widths[i + 1],
                                                    f"branch.fc{i}"))
        else:
            n_branches = config.n_sensors if config.variant.startswith("M-") else 1
            in_size = 1 if n_branches > 1 else config.n_sensors
            for s in range(n_branches):
                prefix = f"branch{s}" if n_branches > 1 else "branch"
                stack = []
                for i in range(config.n_layers):
                    fan_in = in_size if i == 0 else config.hidden
                    stack.append(init_recurrent_layer(
                        config.kind, fan_in, config.hidden, rng,
                        f"{prefix}.layer{i}"))
                    for p in stack[-1].params():
                        self._register(p)
                self._stacks.append(stack)
                gamma = Parameter(np.ones(config.hidden), f"{prefix}.norm.gamma")
                beta = Parameter(np.zeros(config.hidden), f"{prefix}.norm.beta")
                self._register(gamma)
                self._register(beta)
                self._norms.append((gamma, beta))
                self._heads.append(self._dense(rng, config.hidden, config.hd,
                                               f"{prefix}.head"))
            if n_branches > 1:
                self.fusion_bias = Parameter(np.zeros(config.hd), "fusion_bias")
                self._register(self.fusion_bias)

        self._trunk_layers = [
            self._dense(rng, 2, config.hd, "trunk.fc0"),
            self._dense(rng, config.hd, config.hd, "trunk.fc1"),
            self._dense(rng, config.hd, config.hd, "trunk.fc2"),
        ]
        self.output_bias = Parameter(np.zeros(1), "output_bias")
        self._register(self.output_bias)

        self._offsets = np.cumsum([0] + [p.size for p in self._params])

    def _dense(self, rng, fan_in: int, fan_out: int, name: str):
        scale = 1.0 / np.sqrt(fan_in)
        w = Parameter(rng.uniform(-scale, scale, (fan_out, fan_in)), f"{name}.w")
        b = Parameter(rng.uniform(-scale, scale, fan_out), f"{name}.b")
        self._register(w)
        self._register(b)
        return w, b

    def _register(self, p: Parameter) -> None:
        self._params.append(p)

    # -- parameter vector --

    @property
    def params(self) -> list[Parameter]:
        return list(self._params)

    @property
    def n_params(self) -> int:
        return int(self._offsets[-1])

    def flat_values(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self._params])

    def set_flat_values(self, vec: np.ndarray) -> None:
        if vec.shape != (self.n_params,):
            raise DimensionError(
                f"flat vector length {vec.shape} != parameter count {self.n_params}")
        for p, start, end in zip(self._params, self._offsets, self._offsets[1:]):
            p.data[...] = vec[start:end].reshape(p.data.shape)

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([p.grad.reshape(-1) for p in self._params])

    def zero_grads(self) -> None:
        for p in self._params:
            p.zero_grad()

    def param_name_at(self, flat_index: int) -> str:
        idx = int(np.searchsorted(self._offsets, flat_index, side="right")) - 1
        return self._params[idx].name

    # -- branch encoders --

    def _require(self, variants: tuple[str, ...], op: str) -> None:
        if self.config.variant not in variants:
            raise ConfigError(
                f"{op} requires variant in {variants}, model is {self.config.variant}")

    def branch_single(self, seq: Tensor) -> Tensor:
        self._require(("S-GRU", "S-LSTM"), "branch_single")
        h = unroll(seq, self._stacks[0], self.config.kind)
        gamma, beta = self._norms[0]
        h = layer_norm(h, gamma, beta, LAYER_NORM_EPS)
        w, b = self._heads[0]
        return dense_forward(h, w, b, "identity")

    def branch_multi(self, seq: Tensor) -> Tensor:
        self._require(("M-GRU", "M-LSTM"), "branch_multi")
        latent = None
        for s, stack in enumerate(self._stacks):
            column = Tensor(np.ascontiguousarray(seq.data[:, :, s:s + 1]))
            h = unroll(column, stack, self.config.kind)
            gamma, beta = self._norms[s]
            h = layer_norm(h, gamma, beta, LAYER_NORM_EPS)
            w, b = self._heads[s]
            b_s = dense_forward(h, w, b, "identity")
            latent = b_s if latent is None else mul(latent, b_s)
        return add_rowvec(latent, self.fusion_bias)

    def branch_fnn(self, seq: Tensor) -> Tensor:
        self._require(("FNN",), "branch_fnn")
        flat = Tensor(seq.data.reshape(seq.data.shape[0], -1))  # time-major
        h = flat
        last = len(self._fnn_layers) - 1
        for i, (w, b) in enumerate(self._fnn_layers):
            h = dense_forward(h, w, b, "relu" if i < last else "identity")
        return h

    def branch(self, seq: Tensor) -> Tensor:
        """Encode a (B, T, S) window into a (B, hd) latent."""
        if seq.data.ndim != 3:
            raise DimensionError(f"sequence must be (B, T, S), got {seq.data.shape}")
        if seq.data.shape[1] != self.config.seq_len:
            raise DimensionError(
                f"sequence length {seq.data.shape[1]} does not match the "
                f"configured window {self.config.seq_len}")
        if seq.data.shape[2] != self.config.n_sensors:
            raise DimensionError(
                f"sensor count {seq.data.shape[2]} does not match the "
                f"configured {self.config.n_sensors}")
        if self.config.kind == "fnn":
            return self.branch_fnn(seq)
        if self.config.variant.startswith("S-"):
            return self.branch_single(seq)
        return self.branch_multi(seq)

    # -- trunk and fusion --

    def trunk(self, grid: QueryGrid) -> Tensor:
        """Encode (P, 2) normalized coordinates into a (P, hd) latent."""
        coords = grid.coords
        if np.any(coords < 0.0) or np.any(coords > 1.0):
            warnings.warn(
                "query coordinates fall outside [0, 1]; extrapolating",
                stacklevel=2)
        h = Tensor(coords)
        for i, (w, b) in enumerate(self._trunk_layers):
            h = dense_forward(h, w, b, "relu" if i < 2 else "identity")
        return h

    def forward(self, seq: Tensor, grid: QueryGrid) -> Tensor:
        """Reconstruct the field: (B, T, S) window x P queries -> (B, P)."""
        b = self.branch(seq)
        t = self.trunk(grid)
        return fuse(b, t, self.output_bias)

    def predict(self, seq: np.ndarray, grid: QueryGrid) -> np.ndarray:
        """Inference convenience; no gradients recorded."""
        return self.forward(Tensor(seq), grid).data
