"""Layer kernels: forward semantics, gradient exactness, optimizer, checkpoints."""
import numpy as np
import pytest

from sweeprl.errors import NonFiniteGradientError, ShapeMismatchError
from sweeprl.net import (
    Network,
    grad_check,
    load_network,
    make_optimizer,
    save_network,
)
from sweeprl.net.layers import Conv2D, Deconv2D, Dense, MaxPool2, ReLU, Upsample2
from sweeprl.net.optim import AdamLike, PlainSGD


def f64(*layers):
    return Network(list(layers), dtype=np.float64)


class TestConvForward:
    def test_identity_kernel(self):
        conv = Conv2D(1, 1, kernel=1, stride=1, dtype=np.float64)
        conv.weight[:] = 1.0
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        assert np.array_equal(conv.forward(x), x)

    def test_all_ones_kernel_is_local_sum(self):
        conv = Conv2D(1, 1, kernel=2, stride=1, dtype=np.float64)
        conv.weight[:] = 1.0
        x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
        out = conv.forward(x)
        expected = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                expected[i, j] = x[0, 0, i : i + 2, j : j + 2].sum()
        assert np.array_equal(out[0, 0], expected)

    def test_zero_input_gives_bias(self):
        conv = Conv2D(2, 3, kernel=3, dtype=np.float64)
        conv.bias[:] = [1.0, -2.0, 0.5]
        out = conv.forward(np.zeros((1, 2, 5, 5)))
        for c, b in enumerate([1.0, -2.0, 0.5]):
            assert np.all(out[0, c] == b)

    def test_channel_mismatch_raises(self):
        conv = Conv2D(2, 3, kernel=3)
        with pytest.raises(ShapeMismatchError):
            conv.forward(np.zeros((1, 4, 5, 5), dtype=np.float32))

    def test_too_small_input_raises(self):
        conv = Conv2D(1, 1, kernel=5)
        with pytest.raises(ShapeMismatchError):
            conv.forward(np.zeros((1, 1, 3, 3), dtype=np.float32))

    def test_strided_output_shape(self):
        conv = Conv2D(1, 4, kernel=5, stride=3, pad=2)
        assert conv.out_size((20, 20)) == (7, 7)


class TestBackwardOracles:
    def test_zero_grad_out_zero_grads(self):
        conv = Conv2D(2, 2, kernel=3, dtype=np.float64)
        x = np.random.default_rng(0).standard_normal((2, 2, 6, 6))
        out = conv.forward(x)
        conv.backward(np.zeros_like(out))
        assert np.all(conv.grad_weight == 0) and np.all(conv.grad_bias == 0)

    def test_single_pixel_grad_is_input_patch(self):
        conv = Conv2D(1, 1, kernel=3, stride=1, dtype=np.float64)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 1, 5, 5))
        out = conv.forward(x)
        grad = np.zeros_like(out)
        grad[0, 0, 1, 2] = 1.0  # output (1,2) reads input rows 1:4, cols 2:5
        conv.backward(grad)
        assert np.allclose(conv.grad_weight[0, 0], x[0, 0, 1:4, 2:5])

    def test_all_layers_pass_finite_differences(self):
        # randomized trials across every layer kind, double precision
        rng = np.random.default_rng(7)
        worst = 0.0
        for trial in range(20):
            cin = int(rng.integers(1, 3))
            cout = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            s = int(rng.integers(1, 3))
            h = int(rng.integers(2 * k + 2, 2 * k + 6))
            nets = [
                f64(Conv2D(cin, cout, k, s, pad=1, rng=rng, dtype=np.float64)),
                f64(Deconv2D(cin, cout, k, s, rng=rng, dtype=np.float64)),
                f64(
                    Conv2D(cin, cout, k, stride=1, rng=rng, dtype=np.float64),
                    ReLU(),
                    MaxPool2(),
                ),
                f64(Conv2D(cin, cout, k, stride=1, rng=rng, dtype=np.float64), Upsample2()),
                f64(Dense(cin * h * h, 7, rng=rng, dtype=np.float64), ReLU()),
            ]
            for net in nets:
                x = rng.standard_normal((2, cin, h, h))
                worst = max(worst, grad_check(net, x, rng=rng, coords=60))
        assert worst < 1e-6

    def test_corrupted_backward_is_caught(self):
        class BrokenConv(Conv2D):
            def backward(self, grad_out):
                result = super().backward(grad_out)
                self.grad_weight *= 1.05  # deliberate 5% corruption
                return result

        rng = np.random.default_rng(3)
        net = f64(BrokenConv(1, 2, 3, rng=rng, dtype=np.float64))
        x = rng.standard_normal((1, 1, 6, 6))
        assert grad_check(net, x, rng=rng) > 1e-2

    def test_linear_single_layer_near_exact(self):
        rng = np.random.default_rng(5)
        net = f64(Dense(12, 4, rng=rng, dtype=np.float64))
        x = rng.standard_normal((3, 12))
        assert grad_check(net, x, rng=rng) < 1e-9


class TestPoolAndUpsample:
    def test_maxpool_constant_routes_to_first_index(self):
        pool = MaxPool2()
        x = np.full((1, 1, 4, 4), 2.5)
        out = pool.forward(x)
        assert np.all(out == 2.5)
        grad_x = pool.backward(np.ones((1, 1, 2, 2)))
        # each window's gradient lands on its top-left element
        expected = np.zeros((4, 4))
        expected[0::2, 0::2] = 1.0
        assert np.array_equal(grad_x[0, 0], expected)

    def test_maxpool_selects_maximum(self):
        pool = MaxPool2()
        x = np.array([[1, 2], [4, 3]], dtype=np.float64).reshape(1, 1, 2, 2)
        assert pool.forward(x)[0, 0, 0, 0] == 4.0
        grad_x = pool.backward(np.array([[[[7.0]]]]))
        assert grad_x[0, 0, 1, 0] == 7.0 and grad_x.sum() == 7.0

    def test_maxpool_drops_odd_edges(self):
        pool = MaxPool2()
        assert pool.forward(np.zeros((1, 1, 5, 7))).shape == (1, 1, 2, 3)

    def test_upsample_nearest(self):
        up = Upsample2()
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        out = up.forward(x)
        assert np.array_equal(
            out[0, 0],
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]],
        )
        grad_x = up.backward(np.ones((1, 1, 4, 4)))
        assert np.all(grad_x == 4.0)  # each input fed a 2x2 block


class TestShapeAlgebra:
    def test_deconv_inverts_conv_shapes(self):
        rng = np.random.default_rng(2)
        for k, s, p, size in [(5, 3, 2, 20), (4, 2, 1, 10), (3, 2, 1, 9), (2, 1, 0, 6)]:
            conv = Conv2D(1, 1, k, s, pad=p, rng=rng)
            out_hw = conv.out_size((size, size))
            out_pad = ((size + 2 * p - k) % s, (size + 2 * p - k) % s)
            deconv = Deconv2D(1, 1, k, s, pad=p, out_pad=out_pad, rng=rng)
            assert deconv.out_size(out_hw) == (size, size)

    def test_dense_out_shape_feeds_spatial_stack(self):
        rng = np.random.default_rng(4)
        dense = Dense(18, 18, out_shape=(2, 3, 3), rng=rng)
        out = dense.forward(np.zeros((5, 18), dtype=np.float32))
        assert out.shape == (5, 2, 3, 3)


class TestOptimizers:
    def test_zero_gradient_keeps_params(self):
        opt = AdamLike(0.01)
        p = np.array([1.0, -2.0])
        opt.step([p], [np.zeros(2)])
        assert np.array_equal(p, [1.0, -2.0])

    def test_quadratic_converges(self):
        opt = AdamLike(0.1)
        p = np.array([10.0])
        for _ in range(1000):
            opt.step([p], [2.0 * (p - 3.0)])
        assert abs(p[0] - 3.0) < 1e-4

    def test_sgd_step_exact(self):
        opt = PlainSGD(0.1)
        p = np.array([1.0])
        opt.step([p], [np.array([4.0])])
        assert p[0] == pytest.approx(1.0 - 0.4)

    def test_nonfinite_gradient_rejected(self):
        for opt in (AdamLike(0.01), PlainSGD(0.01)):
            with pytest.raises(NonFiniteGradientError):
                opt.step([np.array([1.0])], [np.array([np.nan])])

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(11)
            net = Network([Dense(6, 3, rng=rng), ReLU(), Dense(3, 1, rng=rng)])
            opt = AdamLike(0.005)
            data = np.random.default_rng(12).standard_normal((4, 6)).astype(np.float32)
            for _ in range(50):
                out = net.forward(data)
                net.zero_gradients()
                net.backward(np.ones_like(out))
                opt.step(net.parameters(), net.gradients())
            return [p.copy() for p in net.parameters()]

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)

    def test_unknown_optimizer_name(self):
        with pytest.raises(ValueError):
            make_optimizer("rmsprop", 0.01)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        net = Network(
            [Conv2D(3, 4, 3, 1, pad=1, rng=rng), ReLU(), MaxPool2(),
             Dense(4 * 3 * 3, 5, rng=rng)]
        )
        net.forward(np.random.default_rng(1).standard_normal((1, 3, 6, 6)).astype(np.float32))
        path = tmp_path / "model.swqn"
        save_network(net, str(path), extra={"gain": 0.125, "note": "x"})
        loaded, extra = load_network(str(path))
        assert extra["gain"] == 0.125 and extra["note"] == "x"
        for a, b in zip(net.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)
        x = np.random.default_rng(2).standard_normal((2, 3, 6, 6)).astype(np.float32)
        assert np.array_equal(net.forward(x), loaded.forward(x))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_network(str(path))
