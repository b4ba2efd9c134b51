"""Forward/backward math, losses, optimizers, and checkpoints.

The backward pass is checked against central finite differences for every
objective the training loops build: classifier BCE, end-to-end BCE, and
the two-sided pair-distance BCE through the L2-normalized encoder.
"""

import math

import numpy as np
import pytest

from ldssl.errors import NoCachedForward, NonFiniteGradient, ShapeMismatch
from ldssl.network import (
    DenseLayer,
    Mlp,
    OptimizerState,
    bce_loss,
    build_classifier,
    build_encoder,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)


class TestForward:
    def test_identity_linear_layer(self):
        net = Mlp([DenseLayer(np.eye(2), np.zeros(2), "linear")])
        out = net.forward(np.array([[1.0, 2.0]]))
        assert np.allclose(out, [[1.0, 2.0]])

    def test_zero_sigmoid_unit(self):
        net = Mlp([DenseLayer(np.zeros((1, 3)), np.zeros(1), "sigmoid")])
        out = net.forward(np.array([[5.0, -2.0, 0.7]]))
        assert out[0, 0] == 0.5

    def test_l2norm_output(self):
        net = Mlp([DenseLayer(np.eye(2), np.zeros(2), "linear")],
                  output_normalized=True)
        out = net.forward(np.array([[3.0, 4.0]]))
        assert np.allclose(out, [[0.6, 0.8]])

    def test_shape_mismatch(self):
        net = build_classifier(4, rng=np.random.default_rng(0))
        with pytest.raises(ShapeMismatch):
            net.forward(np.zeros((2, 5)))

    def test_backward_without_forward(self):
        net = build_classifier(4, rng=np.random.default_rng(0))
        with pytest.raises(NoCachedForward):
            net.backward(np.zeros((2, 1)))


class TestBceLoss:
    def test_perfect_prediction_under_clamp(self):
        loss = bce_loss([1.0], [1.0 - 1e-7])
        assert loss.value == pytest.approx(1e-7, rel=1e-2)

    def test_half_prediction_is_ln2(self):
        assert bce_loss([1.0], [0.5]).value == pytest.approx(math.log(2))

    def test_mean_of_two_terms(self):
        assert bce_loss([0.0, 1.0], [0.5, 0.5]).value == pytest.approx(math.log(2))

    def test_gradient_formula(self):
        targets = np.array([1.0, 0.0, 1.0])
        preds = np.array([0.3, 0.6, 0.9])
        loss = bce_loss(targets, preds)
        expected = (preds - targets) / (preds * (1 - preds) * 3)
        assert np.allclose(loss.grad, expected)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            t = rng.integers(0, 2, size=8).astype(float)
            p = rng.uniform(0, 1, size=8)
            assert bce_loss(t, p).value >= 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss([1.0, 0.0], [0.5])


# -- finite-difference oracle (shared with the acceptance suite) -----------

from oracles import (  # noqa: E402
    classifier_analytic,
    classifier_objective,
    max_relative_error,
    numerical_gradients,
    pair_analytic,
    pair_objective,
    relu_kink_margin,
)


class TestGradients:
    def test_classifier_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        checked = 0
        for trial in range(12):
            net = build_classifier(3, hidden_dims=(5, 4), l2_penalty=1e-3,
                                   rng=np.random.default_rng(trial))
            x = rng.standard_normal((6, 3))
            y = rng.integers(0, 2, size=6).astype(float)
            if relu_kink_margin(net, x) < 1e-3:
                continue
            analytic = classifier_analytic(net, x, y)
            numerical = numerical_gradients(
                classifier_objective(net, x, y), net.parameters()
            )
            assert max_relative_error(analytic, numerical) < 1e-4
            checked += 1
        assert checked >= 5

    def test_pair_head_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        checked = 0
        for trial in range(12):
            net = build_encoder(3, hidden_dims=(6,), latent_dim=4,
                                l2_penalty=1e-3,
                                rng=np.random.default_rng(10 + trial))
            x_left = rng.standard_normal((5, 3))
            x_right = rng.standard_normal((5, 3))
            targets = rng.integers(0, 2, size=5).astype(float)
            if min(relu_kink_margin(net, x_left),
                   relu_kink_margin(net, x_right)) < 1e-3:
                continue
            # all-dead rows yield zero-norm latents where the angular
            # objective is not differentiable
            latents = np.vstack([net.predict(x_left), net.predict(x_right)])
            if np.min(np.linalg.norm(latents, axis=1)) < 1e-6:
                continue
            analytic = pair_analytic(net, x_left, x_right, targets)
            numerical = numerical_gradients(
                pair_objective(net, x_left, x_right, targets), net.parameters()
            )
            assert max_relative_error(analytic, numerical) < 1e-4
            checked += 1
        assert checked >= 5

    def test_zero_upstream_gives_zero_grads(self):
        net = build_encoder(4, hidden_dims=(5,), latent_dim=3,
                            rng=np.random.default_rng(3))
        net.forward(np.random.default_rng(4).standard_normal((7, 4)))
        grads, _ = net.backward(np.zeros((7, 3)), include_l2=False)
        for g in grads:
            assert np.all(g == 0.0)

    def test_single_linear_unit_weight_grad_is_input(self):
        net = Mlp([DenseLayer(np.zeros((1, 3)), np.zeros(1), "linear")])
        x = np.array([[0.3, -1.2, 2.0]])
        net.forward(x)
        grads, _ = net.backward(np.ones((1, 1)))
        assert np.allclose(grads[0], x)


class TestOptimizer:
    def test_plain_sgd_step(self):
        state = OptimizerState.sgd(learning_rate=0.01, momentum=0.0, clipnorm=None)
        params = [np.array([0.0])]
        optimizer_step(state, params, [np.array([1.0])])
        assert params[0][0] == pytest.approx(-0.01)

    def test_clipnorm_rescales_global_norm(self):
        state = OptimizerState.sgd(learning_rate=1.0, momentum=0.0, clipnorm=1.0)
        params = [np.zeros(2)]
        optimizer_step(state, params, [np.array([3.0, 4.0])])
        assert np.allclose(params[0], [-0.6, -0.8])

    def test_adam_first_step_magnitude(self):
        state = OptimizerState.adam(learning_rate=0.001)
        params = [np.array([0.0])]
        optimizer_step(state, params, [np.array([10.0])])
        assert abs(params[0][0]) == pytest.approx(0.001, rel=1e-4)

    def test_momentum_accumulates(self):
        state = OptimizerState.sgd(learning_rate=1.0, momentum=0.5, clipnorm=None)
        params = [np.array([0.0])]
        optimizer_step(state, params, [np.array([1.0])])
        optimizer_step(state, params, [np.array([1.0])])
        # velocity: 1 then 1.5
        assert params[0][0] == pytest.approx(-2.5)

    def test_step_counter_increases(self):
        state = OptimizerState.adam()
        params = [np.zeros(3)]
        for expected in (1, 2, 3):
            optimizer_step(state, params, [np.ones(3)])
            assert state.step_count == expected

    def test_nonfinite_gradient_rejected(self):
        state = OptimizerState.sgd()
        with pytest.raises(NonFiniteGradient):
            optimizer_step(state, [np.zeros(2)], [np.array([np.nan, 0.0])])

    def test_descent_property(self):
        # one small step on a fixed batch must not increase that batch loss
        rng = np.random.default_rng(5)
        for trial in range(100):
            net = build_classifier(4, hidden_dims=(6,),
                                   rng=np.random.default_rng(trial))
            x = rng.standard_normal((8, 4))
            y = rng.integers(0, 2, size=8).astype(float)
            before = bce_loss(y, net.forward(x).ravel())
            grads, _ = net.backward(before.grad.reshape(-1, 1))
            state = OptimizerState.sgd(learning_rate=1e-3, momentum=0.0,
                                       clipnorm=None)
            optimizer_step(state, net.parameters(), grads)
            after = bce_loss(y, net.predict(x).ravel())
            assert after.value <= before.value + 1e-9


class TestDeterminismAndContracts:
    def _train_steps(self, seed, steps=20):
        net = build_encoder(3, hidden_dims=(8,), latent_dim=4,
                            rng=np.random.default_rng(seed))
        state = OptimizerState.sgd()
        data_rng = np.random.default_rng(seed + 1)
        for _ in range(steps):
            x_left = data_rng.standard_normal((6, 3))
            x_right = data_rng.standard_normal((6, 3))
            targets = data_rng.integers(0, 2, size=6).astype(float)
            grads = pair_analytic(net, x_left, x_right, targets)
            optimizer_step(state, net.parameters(), grads)
        return net

    def test_bit_identical_parameters_after_training(self):
        first = self._train_steps(42)
        second = self._train_steps(42)
        for a, b in zip(first.parameters(), second.parameters()):
            assert a.tobytes() == b.tobytes()

    def test_encoder_outputs_stay_unit_norm(self):
        net = self._train_steps(7, steps=50)
        out = net.predict(np.random.default_rng(8).standard_normal((100, 3)))
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-6)

    def test_parameters_finite_after_updates(self):
        net = self._train_steps(9, steps=50)
        for p in net.parameters():
            assert np.all(np.isfinite(p))


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = build_encoder(5, hidden_dims=(7, 6), latent_dim=4,
                            l2_penalty=1e-4, rng=np.random.default_rng(11))
        path = tmp_path / "encoder.npz"
        save_checkpoint(path, net, seed=99)
        loaded, seed = load_checkpoint(path)
        assert seed == 99
        assert loaded.output_normalized == net.output_normalized
        for a, b in zip(net.parameters(), loaded.parameters()):
            assert a.tobytes() == b.tobytes()
        for original, copy in zip(net.layers, loaded.layers):
            assert original.activation == copy.activation
            assert original.l2_penalty == copy.l2_penalty

    def test_loaded_net_predicts_identically(self, tmp_path):
        net = build_classifier(4, rng=np.random.default_rng(12))
        path = tmp_path / "clf.npz"
        save_checkpoint(path, net, seed=0)
        loaded, _ = load_checkpoint(path)
        x = np.random.default_rng(13).standard_normal((9, 4))
        assert np.array_equal(net.predict(x), loaded.predict(x))
