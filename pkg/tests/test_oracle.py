"""Synthetic generator and brute-force metric reference contracts."""

import numpy as np
import pytest

from tron.errors import (
    DegenerateSampleError,
    DegenerateVarianceError,
    ScenarioError,
)
from tron.oracle import (
    SyntheticScenario,
    gen_dose_field,
    gen_modulation,
    gen_sensor_counts,
    generate,
    reference_metrics,
    sample_autocorrelation,
    sensor_responses,
    trailing_mean,
)


class TestModulation:
    def test_zero_amplitude_zero_noise(self):
        sc = SyntheticScenario(n_days=100, amplitude=0.0, modulation_noise_sd=0.0)
        assert np.array_equal(gen_modulation(sc), np.zeros(100))

    def test_pure_sinusoid(self):
        sc = SyntheticScenario(n_days=1200, period_days=400.0,
                               amplitude=0.25, modulation_noise_sd=0.0)
        m = gen_modulation(sc)
        assert abs(np.max(np.abs(m)) - 0.25) < 1e-6
        assert abs(m[0]) < 1e-12

    def test_lag1_autocorrelation_tracks_ar_coefficient(self):
        sc = SyntheticScenario(n_days=4000, amplitude=0.0, ar_coeff=0.8,
                               modulation_noise_sd=0.05)
        m = gen_modulation(sc)
        assert abs(sample_autocorrelation(m, 1) - 0.8) < 0.05

    def test_deterministic_per_seed(self):
        sc = SyntheticScenario(n_days=300, seed=7)
        assert np.array_equal(gen_modulation(sc), gen_modulation(sc))


class TestSensorCounts:
    def test_zero_sensitivity_is_constant(self):
        sc = SyntheticScenario(n_days=50, sensor_sensitivity=0.0,
                               sensor_noise_sd=0.0)
        m = gen_modulation(sc)
        counts = gen_sensor_counts(m, sc).counts
        for s in range(sc.n_sensors):
            assert np.allclose(counts[:, s], counts[0, s])

    def test_noiseless_counts_anticorrelate_with_modulation(self):
        sc = SyntheticScenario(n_days=400, sensor_noise_sd=0.0)
        m = gen_modulation(sc)
        counts = gen_sensor_counts(m, sc).counts
        for s in range(sc.n_sensors):
            rho = np.corrcoef(counts[:, s], m)[0, 1]
            assert abs(rho + 1.0) < 1e-9

    def test_noiseless_sensors_mutually_correlated(self):
        sc = SyntheticScenario(n_days=400, n_sensors=2, sensor_noise_sd=0.0)
        m = gen_modulation(sc)
        counts = gen_sensor_counts(m, sc).counts
        assert abs(np.corrcoef(counts[:, 0], counts[:, 1])[0, 1] - 1.0) < 1e-9


class TestDoseField:
    def test_equator_is_constant_base_dose(self):
        sc = SyntheticScenario(n_days=60)
        m = gen_modulation(sc)
        field = gen_dose_field(m, sc)
        equator = np.flatnonzero(field.grid.lat_deg == 0.0)
        assert equator.size > 0
        assert np.allclose(field.values[:, equator], sc.base_dose)

    def test_zero_modulation_gives_flat_field(self):
        sc = SyntheticScenario(n_days=30, amplitude=0.0, modulation_noise_sd=0.0)
        field = gen_dose_field(gen_modulation(sc), sc)
        assert np.allclose(field.values, sc.base_dose)

    def test_poles_carry_maximal_temporal_variance(self):
        sc = SyntheticScenario(n_days=500)
        field = gen_dose_field(gen_modulation(sc), sc)
        variances = field.values.var(axis=0)
        polar = np.abs(field.grid.lat_deg) == 90.0
        assert variances[polar].min() >= variances[~polar].max() - 1e-18

    def test_invalid_field_raises_scenario_error(self):
        sc = SyntheticScenario(n_days=200, amplitude=1.5,
                               modulation_noise_sd=0.0)
        with pytest.raises(ScenarioError):
            gen_dose_field(gen_modulation(sc), sc)

    def test_noiseless_generation_is_invertible(self):
        # least-squares on (1, shield * unit-amplitude trailing mean)
        # recovers D0 and amplitude: the learning problem is well posed
        sc = SyntheticScenario(n_days=400, modulation_noise_sd=0.0,
                               sensor_noise_sd=0.0, amplitude=0.27)
        m = gen_modulation(sc)
        field = gen_dose_field(m, sc)
        lat_rad = np.deg2rad(field.grid.lat_deg)
        shield = np.abs(np.sin(lat_rad)) ** sc.shield_exponent
        mbar_unit = trailing_mean(m / sc.amplitude, sc.memory_lag)
        design = np.stack([
            np.ones(field.values.size),
            (mbar_unit[:, None] * shield[None, :]).reshape(-1),
        ], axis=1)
        coef, *_ = np.linalg.lstsq(design, field.values.reshape(-1), rcond=None)
        d0_hat = coef[0]
        amp_hat = coef[1] / coef[0] * sc.amplitude
        assert abs(d0_hat - sc.base_dose) < 1e-6
        assert abs(amp_hat - sc.amplitude) < 1e-6


class TestTrailingMean:
    def test_matches_naive_loop(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=57)
        got = trailing_mean(m, 5)
        for t in range(m.size):
            lo = max(0, t - 4)
            assert abs(got[t] - m[lo:t + 1].mean()) < 1e-12


class TestGenerateBundle:
    def test_bitwise_deterministic(self):
        sc = SyntheticScenario(n_days=120, seed=11)
        s1, f1, m1 = generate(sc)
        s2, f2, m2 = generate(sc)
        assert np.array_equal(s1.counts, s2.counts)
        assert np.array_equal(f1.values, f2.values)
        assert np.array_equal(m1, m2)

    def test_scenario_json_round_trip(self):
        sc = SyntheticScenario(n_days=77, amplitude=0.123456789, seed=3)
        back = SyntheticScenario.from_json(sc.to_json())
        assert back == sc

    def test_responses_stable_across_noise_settings(self):
        base = SyntheticScenario(n_days=10, seed=5)
        noisy = SyntheticScenario(n_days=10, seed=5, sensor_noise_sd=9.0)
        assert np.array_equal(sensor_responses(base)[0], sensor_responses(noisy)[0])


class TestReferenceMetrics:
    def test_perfect_prediction(self):
        target = np.array([[1.0, 2.0], [3.0, 4.0]])
        rmse, mae, r2, rel = reference_metrics(target, target)
        assert (rmse, mae, r2) == (0.0, 0.0, 1.0)
        assert rel == [0.0, 0.0]

    def test_hand_computed_case(self):
        # single sample: pred (2,2), target (1,3)
        rmse, mae, r2, rel = reference_metrics([2.0, 2.0], [1.0, 3.0])
        assert rmse == 1.0
        assert mae == 1.0
        assert r2 == 0.0  # SSE = 2, SST = 2
        assert abs(rel[0] - np.sqrt(2.0) / np.sqrt(10.0)) < 1e-15

    def test_constant_target_rejected(self):
        with pytest.raises(DegenerateVarianceError):
            reference_metrics([[1.0, 2.0]], [[3.0, 3.0]])

    def test_zero_norm_row_rejected(self):
        with pytest.raises(DegenerateSampleError):
            reference_metrics([[1.0, 2.0], [1.0, 1.0]],
                              [[0.0, 0.0], [1.0, 2.0]])
