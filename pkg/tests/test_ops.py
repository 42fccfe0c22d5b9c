"""Dense layer, layer norm, MSE, and elementwise op contracts."""

import numpy as np
import pytest

from tron.errors import DegenerateNormalizationError, DimensionError
from tron.ndcore import (
    Parameter,
    Tensor,
    add_rowvec,
    dense_forward,
    grad_check,
    layer_norm,
    mse,
    mul,
    record,
)


def P(data, name="p"):
    return Parameter(np.asarray(data, dtype=float), name)


class TestDenseForward:
    def test_identity_case(self):
        x = Tensor([[1.0, 2.0]])
        w = P([[1.0, 0.0], [0.0, 1.0]], "w")
        b = P([0.0, 0.0], "b")
        y = dense_forward(x, w, b, "identity")
        assert np.array_equal(y.data, [[1.0, 2.0]])

    def test_relu_at_zero_preactivation(self):
        x = Tensor([[1.0, -3.0]])
        w = P([[2.0, 1.0]], "w")
        b = P([1.0], "b")
        y = dense_forward(x, w, b, "relu")
        assert np.array_equal(y.data, [[0.0]])

    def test_shape_mismatch_names_operand(self):
        x = Tensor(np.zeros((2, 3)))
        w = P(np.zeros((4, 5)), "lin.w")
        b = P(np.zeros(4), "lin.b")
        with pytest.raises(DimensionError, match="lin.w"):
            dense_forward(x, w, b, "identity")

    @pytest.mark.parametrize("activation", ["identity", "relu"])
    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_match_finite_differences(self, activation, seed):
        rng = np.random.default_rng(seed)
        x = Parameter(rng.normal(size=(3, 4)), "x")
        w = Parameter(rng.normal(size=(2, 4)) * 0.5, "w")
        b = Parameter(rng.normal(size=2) * 0.5, "b")
        target = Tensor(rng.normal(size=(3, 2)))

        def loss_fn():
            return mse(dense_forward(x, w, b, activation), target)

        report = grad_check(loss_fn, [x, w, b], tolerance=1e-7)
        assert report.passed, report.per_param


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        x = Tensor([[1.0, 1.0, 1.0, 1.0]])
        y = layer_norm(x, P(np.ones(4), "g"), P(np.zeros(4), "b"))
        assert np.allclose(y.data, 0.0)

    def test_two_feature_symmetry(self):
        x = Tensor([[1.0, 3.0]])
        y = layer_norm(x, P(np.ones(2), "g"), P(np.zeros(2), "b"))
        assert np.allclose(y.data, [[-1.0, 1.0]], atol=1e-4)

    def test_single_feature_rejected(self):
        x = Tensor([[1.0]])
        with pytest.raises(DegenerateNormalizationError):
            layer_norm(x, P(np.ones(1), "g"), P(np.zeros(1), "b"))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        x = Parameter(rng.normal(size=(3, 6)), "x")
        gamma = Parameter(1.0 + 0.1 * rng.normal(size=6), "gamma")
        beta = Parameter(0.1 * rng.normal(size=6), "beta")
        target = Tensor(rng.normal(size=(3, 6)))

        def loss_fn():
            return mse(layer_norm(x, gamma, beta), target)

        report = grad_check(loss_fn, [x, gamma, beta], tolerance=1e-6)
        assert report.passed, report.per_param


class TestMse:
    def test_equal_inputs_zero(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert mse(a, b).item() == 0.0

    def test_hand_arithmetic(self):
        assert mse(Tensor([0.0, 0.0]), Tensor([1.0, 3.0])).item() == 5.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse(Tensor([1.0]), Tensor([[1.0]]))

    def test_gradient_closed_form(self):
        rng = np.random.default_rng(7)
        pred = Parameter(rng.normal(size=(4, 3)), "pred")
        target = Tensor(rng.normal(size=(4, 3)))
        with record() as tape:
            loss = mse(pred, target)
        tape.backward(loss)
        expected = 2.0 * (pred.data - target.data) / pred.data.size
        assert np.allclose(pred.grad, expected, rtol=1e-12, atol=1e-15)

        def loss_fn():
            return mse(pred, target)

        report = grad_check(loss_fn, [pred], tolerance=1e-8)
        assert report.passed


class TestElementwise:
    @pytest.mark.parametrize("seed", range(3))
    def test_mul_and_rowvec_gradients(self, seed):
        rng = np.random.default_rng(200 + seed)
        a = Parameter(rng.normal(size=(2, 5)), "a")
        b = Parameter(rng.normal(size=(2, 5)), "b")
        v = Parameter(rng.normal(size=5), "v")
        target = Tensor(rng.normal(size=(2, 5)))

        def loss_fn():
            return mse(add_rowvec(mul(a, b), v), target)

        report = grad_check(loss_fn, [a, b, v], tolerance=1e-7)
        assert report.passed, report.per_param

    def test_mul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mul(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))


class TestDeterminism:
    def test_forward_passes_are_bitwise_identical(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(8, 16)))
        w = Parameter(rng.normal(size=(16, 16)), "w")
        b = Parameter(rng.normal(size=16), "b")
        g = Parameter(np.ones(16), "g")
        be = Parameter(np.zeros(16), "be")
        y1 = layer_norm(dense_forward(x, w, b, "relu"), g, be)
        y2 = layer_norm(dense_forward(x, w, b, "relu"), g, be)
        assert np.array_equal(y1.data, y2.data)

    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(12)
        x = Tensor(rng.normal(size=(4, 8)) * 50.0)
        w = Parameter(rng.normal(size=(8, 8)) * 50.0, "w")
        b = Parameter(rng.normal(size=8), "b")
        y = dense_forward(x, w, b, "relu")
        assert np.all(np.isfinite(y.data))
