import numpy as np
import pytest

from groupvae.errors import NumericError
from groupvae.nn import BatchNorm, DenseLayer, Mlp, build_mlp, mlp_param_count
from groupvae.rng import make_rng

from oracles import finite_difference, max_rel_error, min_relu_preactivation


def plain_layer(weight, bias, activation="linear"):
    return DenseLayer(np.asarray(weight, float), np.asarray(bias, float), activation)


class TestForward:
    def test_identity_layer_passes_batch_through(self):
        net = Mlp([plain_layer(np.eye(3), np.zeros(3))])
        batch = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(net.forward(batch), batch)

    def test_relu_clamps_negative_preactivation(self):
        net = Mlp([plain_layer([[1.0]], [-1.0], activation="relu")])
        np.testing.assert_array_equal(net.forward([[0.5]]), [[0.0]])

    def test_two_layer_matches_hand_computation(self):
        # relu([x @ W1 + b1]) @ W2 + b2, worked out on paper for both rows
        net = Mlp(
            [
                plain_layer([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5], activation="relu"),
                plain_layer([[1.0, -1.0], [2.0, 0.0]], [1.0, 1.0]),
            ]
        )
        batch = np.array([[2.0, 0.5], [-1.0, 1.0]])
        expected = np.array([[16.0, -3.0], [6.5, -1.5]])
        np.testing.assert_allclose(net.forward(batch), expected, rtol=0, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        net = Mlp([plain_layer(np.eye(3), np.zeros(3))])
        with pytest.raises(ValueError, match="columns"):
            net.forward(np.zeros((2, 4)))

    def test_chained_widths_validated(self):
        with pytest.raises(ValueError, match="chain"):
            Mlp(
                [
                    plain_layer(np.zeros((3, 4)), np.zeros(4)),
                    plain_layer(np.zeros((5, 2)), np.zeros(2)),
                ]
            )

    def test_nonfinite_output_reported(self):
        net = Mlp([plain_layer([[1e308]], [0.0])])
        with pytest.raises(NumericError):
            net.forward([[1e308]])

    def test_eval_mode_is_pure(self):
        net = build_mlp([5, 8, 3], make_rng(0), batch_norm=True, dropout=0.5)
        batch = make_rng(1).standard_normal((4, 5))
        first = net.forward(batch, train=False)
        second = net.forward(batch, train=False)
        np.testing.assert_array_equal(first, second)


class TestBatchNorm:
    def test_train_mode_requires_two_rows(self):
        net = build_mlp([3, 4, 2], make_rng(0), batch_norm=True, dropout=0.0)
        with pytest.raises(ValueError, match="at least 2"):
            net.forward(np.zeros((1, 3)), train=True, rng=make_rng(1))

    def test_train_normalizes_to_unit_scale(self):
        layer = DenseLayer(
            np.eye(2), np.zeros(2), activation="linear", batch_norm=BatchNorm.identity(2)
        )
        net = Mlp([layer])
        batch = make_rng(2).standard_normal((64, 2)) * 5.0 + 3.0
        out = net.forward(batch, train=True, rng=make_rng(3))
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-3)

    def test_running_stats_converge_to_batch_stats(self):
        layer = DenseLayer(
            np.eye(1), np.zeros(1), activation="linear", batch_norm=BatchNorm.identity(1)
        )
        net = Mlp([layer])
        batch = np.array([[1.0], [3.0]])  # mean 2, biased var 1
        for _ in range(400):
            net.forward(batch, train=True, rng=make_rng(0))
        np.testing.assert_allclose(layer.batch_norm.running_mean, [2.0], atol=1e-9)
        np.testing.assert_allclose(layer.batch_norm.running_var, [1.0], atol=1e-9)
        assert np.all(layer.batch_norm.running_var > 0)


class TestDropout:
    def test_inverted_scaling_preserves_expectation(self):
        # mean of many stochastic forwards should match the eval output
        layer = DenseLayer(
            np.eye(3), np.zeros(3), activation="linear", dropout=0.5
        )
        net = Mlp([layer])
        batch = np.array([[1.0, -2.0, 3.0]])
        eval_out = net.forward(batch, train=False)
        rng = make_rng(7)
        n = 20_000
        samples = np.stack([net.forward(batch, train=True, rng=rng) for _ in range(n)])
        mean = samples.mean(axis=0)
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(mean - eval_out) <= 3.0 * stderr + 1e-12)

    def test_train_dropout_needs_rng(self):
        net = build_mlp([3, 4, 2], make_rng(0), batch_norm=False, dropout=0.5)
        with pytest.raises(ValueError, match="rng"):
            net.forward(np.zeros((2, 3)), train=True)


class TestBackward:
    def test_zero_output_grad_gives_zero_grads(self):
        net = build_mlp([4, 6, 3], make_rng(0), batch_norm=True, dropout=0.3)
        x = make_rng(1).standard_normal((5, 4))
        out, cache = net.forward(x, train=True, rng=make_rng(2), want_cache=True)
        grads, d_in = net.backward(cache, np.zeros_like(out))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(d_in == 0)

    def test_scalar_quadratic_gradient(self):
        # loss = 0.5 (w x - y)^2, so dL/dw = (w x - y) x
        w, x, y = 1.7, 0.8, 2.0
        net = Mlp([plain_layer([[w]], [0.0])])
        out, cache = net.forward([[x]], train=True, want_cache=True)
        grads, _ = net.backward(cache, np.array([[out[0, 0] - y]]))
        np.testing.assert_allclose(grads[0], [[(w * x - y) * x]], atol=1e-14)

    @pytest.mark.parametrize("batch_norm,dropout", [(False, 0.0), (True, 0.0), (False, 0.5), (True, 0.5)])
    def test_gradients_match_finite_differences(self, batch_norm, dropout):
        rng = make_rng(11 + int(batch_norm) + int(dropout * 10))
        for trial in range(5):
            widths = [int(rng.integers(2, 8)) for _ in range(int(rng.integers(2, 4)) + 1)]
            net = build_mlp(widths, rng, batch_norm=batch_norm, dropout=dropout)
            # check at a generic point: fresh nets have zero biases, which
            # parks dropped-out rows exactly on the ReLU kink
            for p in net.parameters():
                p += rng.uniform(-0.3, 0.3, p.shape)
            target_grad = rng.standard_normal((4, widths[-1]))

            # resample configurations that leave a pre-activation near the
            # kink, where central differences are meaningless
            while True:
                forward_seed = int(rng.integers(2**32))
                x = rng.standard_normal((4, widths[0]))
                out, cache = net.forward(
                    x, train=True, rng=make_rng(forward_seed), want_cache=True
                )
                if min_relu_preactivation(net, cache) > 1e-3:
                    break
            analytic, analytic_input = net.backward(cache, target_grad)

            def loss():
                res = net.forward(x, train=True, rng=make_rng(forward_seed))
                return float(np.sum(target_grad * res))

            numeric = finite_difference(loss, net.parameters())
            assert max_rel_error(analytic, numeric) < 1e-4
            numeric_input = finite_difference(loss, [x])
            assert max_rel_error([analytic_input], numeric_input) < 1e-4

    def test_grad_shape_mismatch_rejected(self):
        net = build_mlp([3, 4, 2], make_rng(0), batch_norm=False, dropout=0.0)
        _, cache = net.forward(np.zeros((2, 3)), train=True, want_cache=True)
        with pytest.raises(ValueError):
            net.backward(cache, np.zeros((2, 5)))


class TestHelpers:
    def test_param_count_matches_built_network(self):
        rng = make_rng(5)
        for _ in range(10):
            widths = [int(rng.integers(2, 40)) for _ in range(int(rng.integers(2, 5)) + 1)]
            bn = bool(rng.integers(2))
            net = build_mlp(widths, rng, batch_norm=bn)
            assert net.param_count() == mlp_param_count(widths, bn)

    def test_snapshot_restore_roundtrip(self):
        net = build_mlp([3, 5, 2], make_rng(0))
        saved = net.snapshot()
        for p in net.parameters():
            p += 1.0
        net.restore(saved)
        for p, s in zip(net.parameters(), saved):
            np.testing.assert_array_equal(p, s)
