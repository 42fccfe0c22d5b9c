"""Synthetic ground truth for end-to-end testing, plus naive reference
implementations of every evaluation metric.

The generator is a declared stand-in for the physics pipeline that
produced the original corpus: a seeded solar-modulation proxy drives
anticorrelated sensor counts and a latitude-shielded dose field. The
field depends on a trailing L-day mean of the driver, so temporal history
is genuinely informative and recurrent encoders have a learnable edge
over a static baseline. No physical fidelity is claimed.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from tron.data import EPOCH, FieldSeries, SensorSeries, make_grid
from tron.errors import (
    DegenerateSampleError,
    DegenerateVarianceError,
    DimensionError,
    ScenarioError,
)


@dataclass(frozen=True)
class SyntheticScenario:
    """Everything needed to regenerate a corpus bit-for-bit."""

    n_days: int = 2000
    n_sensors: int = 6
    lat_step: float = 5.0
    lon_step: float = 5.0
    period_days: float = 600.0        # modulation cycle
    amplitude: float = 0.3            # modulation swing
    ar_coeff: float = 0.9             # AR(1) persistence of modulation noise
    modulation_noise_sd: float = 0.02
    sensor_offset: float = 100.0      # baseline counts a_s
    sensor_sensitivity: float = 40.0  # counts per modulation unit b_s
    sensor_noise_sd: float = 1.5      # i.i.d. per-day count noise
    base_dose: float = 0.06           # D0, uSv/h at the equator
    shield_exponent: float = 2.0      # |sin(lat)|^q latitude shielding
    memory_lag: int = 15              # L, trailing-mean window of the field
    seed: int = 0

    def __post_init__(self):
        if self.base_dose <= 0.0:
            raise ScenarioError("base_dose must be positive")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ScenarioError("ar_coeff must be in [0, 1)")
        if self.memory_lag < 1:
            raise ScenarioError("memory_lag must be >= 1")
        if self.n_days < 1 or self.n_sensors < 1:
            raise ScenarioError("n_days and n_sensors must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SyntheticScenario":
        return cls(**json.loads(text))


def _rngs(scenario: SyntheticScenario):
    # independent child streams keep each generator stable against the others
    mod, resp, noise = np.random.SeedSequence(scenario.seed).spawn(3)
    return (np.random.default_rng(mod), np.random.default_rng(resp),
            np.random.default_rng(noise))


def _dates(n_days: int) -> list[datetime.date]:
    return [EPOCH + datetime.timedelta(days=i) for i in range(n_days)]


def gen_modulation(scenario: SyntheticScenario) -> np.ndarray:
    """m(t) = amplitude * sin(2 pi t / period) + AR(1) noise."""
    rng, _, _ = _rngs(scenario)
    t = np.arange(scenario.n_days, dtype=np.float64)
    m = scenario.amplitude * np.sin(2.0 * np.pi * t / scenario.period_days)
    innovations = rng.normal(0.0, scenario.modulation_noise_sd, scenario.n_days)
    noise = np.zeros(scenario.n_days)
    prev = 0.0
    for i in range(scenario.n_days):
        prev = scenario.ar_coeff * prev + innovations[i]
        noise[i] = prev
    return m + noise


def sensor_responses(scenario: SyntheticScenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-sensor (offset a_s, sensitivity b_s), jittered deterministically."""
    _, rng, _ = _rngs(scenario)
    a = scenario.sensor_offset * (1.0 + 0.1 * rng.uniform(-1, 1, scenario.n_sensors))
    b = scenario.sensor_sensitivity * (1.0 + 0.2 * rng.uniform(-1, 1, scenario.n_sensors))
    return a, b


def gen_sensor_counts(m: np.ndarray, scenario: SyntheticScenario) -> SensorSeries:
    """Y_s(t) = a_s - b_s * m(t) + noise; counts fall when modulation rises."""
    a, b = sensor_responses(scenario)
    counts = a[None, :] - m[:, None] * b[None, :]
    if scenario.sensor_noise_sd > 0.0:
        _, _, rng = _rngs(scenario)
        counts = counts + rng.normal(0.0, scenario.sensor_noise_sd, counts.shape)
    ids = [f"S{i:02d}" for i in range(scenario.n_sensors)]
    return SensorSeries(_dates(scenario.n_days), counts, ids)


def trailing_mean(m: np.ndarray, lag: int) -> np.ndarray:
    """Mean of the most recent min(lag, t+1) values at each day t."""
    csum = np.concatenate([[0.0], np.cumsum(m)])
    t = np.arange(1, m.size + 1)
    lo = np.maximum(t - lag, 0)
    return (csum[t] - csum[lo]) / (t - lo)


def gen_dose_field(m: np.ndarray, scenario: SyntheticScenario) -> FieldSeries:
    """X(r, t) = D0 * (1 + shield(lat) * mbar_L(t)), shield = |sin(lat)|^q."""
    grid = make_grid(scenario.lat_step, scenario.lon_step)
    lat_rad = np.deg2rad(grid.lat_deg)
    shield = np.abs(np.sin(lat_rad)) ** scenario.shield_exponent
    mbar = trailing_mean(m, scenario.memory_lag)
    values = scenario.base_dose * (1.0 + mbar[:, None] * shield[None, :])
    if np.any(values <= 0.0):
        raise ScenarioError(
            "scenario parameters drive the field non-positive; reduce "
            "amplitude or modulation noise")
    return FieldSeries(_dates(scenario.n_days), values, grid)


def generate(scenario: SyntheticScenario) -> tuple[SensorSeries, FieldSeries, np.ndarray]:
    """Full synthetic corpus: (sensors, field, modulation)."""
    m = gen_modulation(scenario)
    return gen_sensor_counts(m, scenario), gen_dose_field(m, scenario), m


# -- brute-force metric references (equivalence oracles for tron.evaluation) --

def reference_metrics(pred, target) -> tuple[float, float, float, list[float]]:
    """Naive double-loop RMSE, MAE, R^2, and per-sample relative L2.

    Deliberately unvectorized; serves as the independent oracle for the
    evaluation module.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionError(
            f"metric shapes differ: {pred.shape} vs {target.shape}")
    if pred.ndim == 1:
        pred = pred[None, :]
        target = target[None, :]
    n_rows, n_cols = pred.shape

    total = 0.0
    count = 0
    for i in range(n_rows):
        for j in range(n_cols):
            total += target[i][j]
            count += 1
    mean_target = total / count

    sse = 0.0
    sae = 0.0
    sst = 0.0
    for i in range(n_rows):
        for j in range(n_cols):
            diff = pred[i][j] - target[i][j]
            sse += diff * diff
            sae += abs(diff)
            dev = target[i][j] - mean_target
            sst += dev * dev
    if sst == 0.0:
        raise DegenerateVarianceError("targets have zero variance; R^2 undefined")

    rel_l2 = []
    for i in range(n_rows):
        num = 0.0
        den = 0.0
        for j in range(n_cols):
            diff = pred[i][j] - target[i][j]
            num += diff * diff
            den += target[i][j] * target[i][j]
        if den == 0.0:
            raise DegenerateSampleError(f"target row {i} has zero norm")
        rel_l2.append((num ** 0.5) / (den ** 0.5))

    rmse = (sse / count) ** 0.5
    mae = sae / count
    r2 = 1.0 - sse / sst
    return rmse, mae, r2, rel_l2


def sample_autocorrelation(x: Iterable[float], lag: int = 1) -> float:
    x = np.asarray(list(x), dtype=float)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    return float(np.dot(x[:-lag], x[lag:])) / denom
