import numpy as np
import pytest
from scipy.special import log_softmax

from gradnoise.nn import (AffineLayer, MlpModel, accuracy, dropout_forward,
                          gradient_check, kink_margin, mlp_backward, mlp_forward,
                          random_check_model, relu, relu_backward,
                          softmax_cross_entropy, softmax_cross_entropy_batch)
from gradnoise.tensor_core import DimensionError, Rng


def two_layer_model():
    rng = Rng(1)
    return MlpModel(layers=[
        AffineLayer(weights=rng.gaussian((4, 5), stddev=0.5),
                    bias=rng.gaussian((5,), stddev=0.2)),
        AffineLayer(weights=rng.gaussian((5, 3), stddev=0.5),
                    bias=rng.gaussian((3,), stddev=0.2)),
    ])


class TestRelu:
    def test_values(self):
        x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
        assert np.array_equal(relu(x), [0.0, 0.0, 0.0, 0.5, 2.0])

    def test_backward_gates_by_sign(self):
        upstream = np.ones(5)
        z = np.array([-1.0, -0.001, 0.0, 0.001, 1.0])
        out = relu_backward(upstream, z)
        # derivative at exactly zero is taken as 0
        assert np.array_equal(out, [0.0, 0.0, 0.0, 1.0, 1.0])

    def test_backward_shape_mismatch(self):
        with pytest.raises(DimensionError):
            relu_backward(np.ones(3), np.ones(4))


class TestSoftmaxCrossEntropy:
    def test_matches_scipy_log_softmax(self):
        rng = Rng(2)
        logits = rng.gaussian((6, 10), stddev=3.0)
        expected = -log_softmax(logits, axis=1)
        for i in range(len(logits)):
            for label in range(10):
                loss, _ = softmax_cross_entropy(logits[i], label)
                assert loss == pytest.approx(expected[i, label], rel=1e-12)

    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros(10), 3)
        assert loss == pytest.approx(np.log(10))

    def test_batch_is_mean(self):
        rng = Rng(3)
        logits = rng.gaussian((8, 5))
        labels = rng.integers(5, size=8)
        loss, _ = softmax_cross_entropy_batch(logits, labels)
        singles = [softmax_cross_entropy(logits[i], int(labels[i]))[0]
                   for i in range(8)]
        assert loss == pytest.approx(np.mean(singles), rel=1e-12)

    def test_batch_gradient_matches_finite_difference(self):
        rng = Rng(4)
        logits = rng.gaussian((4, 6))
        labels = rng.integers(6, size=4)
        _, grad = softmax_cross_entropy_batch(logits, labels)
        h = 1e-6
        for i in range(4):
            for j in range(6):
                up = logits.copy()
                up[i, j] += h
                down = logits.copy()
                down[i, j] -= h
                numeric = (softmax_cross_entropy_batch(up, labels)[0]
                           - softmax_cross_entropy_batch(down, labels)[0]) / (2 * h)
                assert grad[i, j] == pytest.approx(numeric, abs=1e-8)

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[1000.0, -1000.0, 0.0]])
        loss, grad = softmax_cross_entropy_batch(logits, np.array([1]))
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy_batch(np.zeros((2, 3)), np.array([0, 3]))


class TestDropout:
    def test_disabled_at_eval(self):
        x = Rng(1).gaussian((10, 10))
        out, mask = dropout_forward(x, 0.5, Rng(2), training=False)
        assert np.array_equal(out, x)
        assert np.all(mask == 1.0)

    def test_rate_zero_is_identity(self):
        x = Rng(1).gaussian((10, 10))
        out, _ = dropout_forward(x, 0.0, Rng(2), training=True)
        assert np.array_equal(out, x)

    def test_survivors_scaled(self):
        x = np.ones((100, 100))
        out, mask = dropout_forward(x, 0.25, Rng(3), training=True)
        surviving = out[out != 0.0]
        assert np.all(surviving == pytest.approx(1.0 / 0.75))
        dropped_fraction = float((out == 0.0).mean())
        assert 0.22 < dropped_fraction < 0.28
        assert np.array_equal(out, x * mask)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            dropout_forward(np.ones(3), 1.0, Rng(1), training=True)
        with pytest.raises(ValueError):
            dropout_forward(np.ones(3), -0.1, Rng(1), training=True)


class TestMlpForwardBackward:
    def test_output_shape(self):
        model = two_layer_model()
        logits, cache = mlp_forward(model, np.zeros((7, 4)))
        assert logits.shape == (7, 3)
        assert len(cache.pre_activations) == 2

    def test_no_relu_on_output(self):
        # a model forced to produce negative logits must keep them negative
        model = MlpModel(layers=[AffineLayer(weights=-np.eye(2),
                                             bias=np.zeros(2))])
        logits, _ = mlp_forward(model, np.array([[3.0, 5.0]]))
        assert np.array_equal(logits, [[-3.0, -5.0]])

    def test_batch_dim_mismatch(self):
        with pytest.raises(DimensionError):
            mlp_forward(two_layer_model(), np.zeros((3, 5)))

    def test_dropout_needs_rng(self):
        model = two_layer_model()
        model.dropout_rate = 0.5
        with pytest.raises(ValueError):
            mlp_forward(model, np.zeros((2, 4)), training=True)

    def test_gradients_match_finite_differences(self):
        rng = Rng(77)
        for _ in range(5):
            model, batch, labels = random_check_model(rng)
            assert gradient_check(model, batch, labels) < 1e-6

    def test_kink_margin_inf_for_single_layer(self):
        model = MlpModel(layers=[AffineLayer(weights=np.eye(2), bias=np.zeros(2))])
        assert kink_margin(model, np.ones((1, 2))) == np.inf

    def test_backward_rejects_stale_cache(self):
        model = two_layer_model()
        _, cache = mlp_forward(model, np.zeros((2, 4)))
        with pytest.raises(DimensionError):
            mlp_backward(model, cache, np.zeros((3, 3)))


class TestModelValidation:
    def test_layer_chain_must_connect(self):
        with pytest.raises(DimensionError):
            MlpModel(layers=[
                AffineLayer(weights=np.zeros((4, 5)), bias=np.zeros(5)),
                AffineLayer(weights=np.zeros((6, 3)), bias=np.zeros(3)),
            ])

    def test_bias_must_match_fan_out(self):
        with pytest.raises(DimensionError):
            AffineLayer(weights=np.zeros((4, 5)), bias=np.zeros(4))

    def test_parameters_round_trip(self):
        model = two_layer_model()
        params = model.parameters()
        assert set(params) == {"w0", "b0", "w1", "b1"}
        clone = two_layer_model()
        clone.set_parameters({k: v.copy() for k, v in params.items()})
        for k in params:
            assert np.array_equal(clone.parameters()[k], params[k])


class TestAccuracy:
    def test_perfect_classifier(self):
        # identity logits: class = index of the largest input coordinate
        model = MlpModel(layers=[AffineLayer(weights=np.eye(3), bias=np.zeros(3))])
        inputs = np.eye(3)
        labels = np.array([0, 1, 2])
        assert accuracy(model, inputs, labels) == 1.0

    def test_chance_level_on_constant_logits(self):
        model = MlpModel(layers=[AffineLayer(weights=np.zeros((3, 3)),
                                             bias=np.zeros(3))])
        inputs = Rng(1).gaussian((100, 3))
        labels = np.zeros(100, dtype=np.int64)
        # argmax of identical logits is class 0
        assert accuracy(model, inputs, labels) == 1.0

    def test_empty_inputs_rejected(self):
        model = two_layer_model()
        with pytest.raises(ValueError):
            accuracy(model, np.zeros((0, 4)), np.zeros(0, dtype=np.int64))

    def test_batched_equals_unbatched(self):
        model = two_layer_model()
        inputs = Rng(6).gaussian((2500, 4))
        labels = Rng(7).integers(3, size=2500)
        assert (accuracy(model, inputs, labels, batch_size=1000)
                == accuracy(model, inputs, labels, batch_size=2500))
