"""Gradient correctness: naive layer oracles and finite differences."""

import numpy as np
import pytest

from ambiloc.model import layers
from ambiloc.model.config import ArchConfig
from ambiloc.model.network import Network

RNG = np.random.default_rng(20260814)


def tiny_config(frames: int = 6, bins: int = 33) -> ArchConfig:
    return ArchConfig(
        name="tiny",
        blocks=1,
        pool_sizes=(4,),
        class_count=7,
        conv_filters=4,
        recurrent_hidden=8,
        input_frames=frames,
        input_bins=bins,
    )


def naive_conv2d(x, w, b):
    bsz, t, f, cin = x.shape
    k = w.shape[0]
    cout = w.shape[-1]
    pad = k // 2
    xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    y = np.zeros((bsz, t, f, cout))
    for n in range(bsz):
        for ti in range(t):
            for fi in range(f):
                for o in range(cout):
                    acc = b[o]
                    for ki in range(k):
                        for kj in range(k):
                            for c in range(cin):
                                acc += xpad[n, ti + ki, fi + kj, c] * w[ki, kj, c, o]
                    y[n, ti, fi, o] = acc
    return y


def naive_lstm(x, w, u, b, reverse=False):
    bsz, steps, _ = x.shape
    hidden = u.shape[0]
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    h = np.zeros((bsz, hidden))
    c = np.zeros((bsz, hidden))
    out = np.zeros((bsz, steps, hidden))
    for step in order:
        z = x[:, step] @ w + h @ u + b
        gi = 1 / (1 + np.exp(-z[:, :hidden]))
        gf = 1 / (1 + np.exp(-z[:, hidden : 2 * hidden]))
        gg = np.tanh(z[:, 2 * hidden : 3 * hidden])
        go = 1 / (1 + np.exp(-z[:, 3 * hidden :]))
        c = gf * c + gi * gg
        h = go * np.tanh(c)
        out[:, step] = h
    return out


class TestConvOracle:
    def test_matches_naive(self):
        x = RNG.standard_normal((2, 4, 6, 3))
        w = RNG.standard_normal((3, 3, 3, 5))
        b = RNG.standard_normal(5)
        y, _ = layers.conv2d_forward(x, w, b)
        np.testing.assert_allclose(y, naive_conv2d(x, w, b), atol=1e-12)

    def test_zero_padding_at_edges(self):
        # a kernel reading only the top-left tap sees zeros on the border
        x = np.ones((1, 3, 3, 1))
        w = np.zeros((3, 3, 1, 1))
        w[0, 0, 0, 0] = 1.0
        y, _ = layers.conv2d_forward(x, w, np.zeros(1))
        assert y[0, 0, 0, 0] == 0.0
        assert y[0, 1, 1, 0] == 1.0


class TestPoolOracle:
    def test_matches_naive(self):
        x = RNG.standard_normal((2, 3, 11, 4))
        y, _ = layers.maxpool_freq_forward(x, 4)
        assert y.shape == (2, 3, 2, 4)
        for fo in range(2):
            expected = x[:, :, fo * 4 : (fo + 1) * 4, :].max(axis=2)
            np.testing.assert_array_equal(y[:, :, fo, :], expected)

    def test_remainder_bins_dropped(self):
        x = np.zeros((1, 1, 11, 1))
        x[0, 0, 8:, 0] = 100.0
        y, _ = layers.maxpool_freq_forward(x, 4)
        assert y.max() == 0.0

    def test_tie_routes_to_first_index(self):
        x = np.zeros((1, 1, 4, 1))
        y, cache = layers.maxpool_freq_forward(x, 4)
        dx = layers.maxpool_freq_backward(np.ones_like(y), cache)
        np.testing.assert_array_equal(dx[0, 0, :, 0], [1.0, 0.0, 0.0, 0.0])

    def test_backward_scatters_to_argmax(self):
        x = RNG.standard_normal((2, 3, 8, 2))
        y, cache = layers.maxpool_freq_forward(x, 4)
        dy = RNG.standard_normal(y.shape)
        dx = layers.maxpool_freq_backward(dy, cache)
        assert dx.shape == x.shape
        np.testing.assert_allclose(dx.sum(), dy.sum(), atol=1e-12)
        assert np.count_nonzero(dx) <= dy.size


class TestLstmOracle:
    def test_forward_matches_naive(self):
        x = RNG.standard_normal((2, 5, 3))
        w = 0.4 * RNG.standard_normal((3, 16))
        u = 0.4 * RNG.standard_normal((4, 16))
        b = 0.1 * RNG.standard_normal(16)
        for reverse in (False, True):
            h, _ = layers.lstm_forward(x, w, u, b, reverse=reverse)
            np.testing.assert_allclose(
                h, naive_lstm(x, w, u, b, reverse=reverse), atol=1e-12
            )

    def test_reverse_sees_future_frames(self):
        # changing the last frame alters the reverse output at frame 0
        x = np.zeros((1, 4, 2))
        w = 0.5 * np.ones((2, 8))
        u = np.zeros((2, 8))
        b = np.zeros(8)
        h0, _ = layers.lstm_forward(x, w, u, b, reverse=True)
        x[0, -1] = 1.0
        h1, _ = layers.lstm_forward(x, w, u, b, reverse=True)
        assert abs(h1[0, 0, 0] - h0[0, 0, 0]) > 0
        hf0, _ = layers.lstm_forward(np.zeros((1, 4, 2)), w, u, b)
        hf1, _ = layers.lstm_forward(x, w, u, b)
        np.testing.assert_array_equal(hf0[0, 0], hf1[0, 0])


class TestLossOracle:
    def test_all_half_outputs_give_ln2(self):
        logits = np.zeros((3, 5, 7))
        targets = RNG.integers(0, 2, logits.shape).astype(float)
        loss, _ = layers.bce_with_logits(logits, targets)
        assert loss == pytest.approx(np.log(2), abs=1e-9)

    def test_confident_correct_prediction_drives_loss_to_zero(self):
        targets = RNG.integers(0, 2, (2, 4, 6)).astype(float)
        logits = np.where(targets > 0, 50.0, -50.0)
        loss, _ = layers.bce_with_logits(logits, targets)
        assert loss < 1e-9

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[1e4, -1e4]])
        targets = np.array([[0.0, 1.0]])
        loss, grad = layers.bce_with_logits(logits, targets)
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))

    def test_gradient_is_scaled_residual(self):
        logits = RNG.standard_normal((2, 3, 4))
        targets = RNG.integers(0, 2, logits.shape).astype(float)
        _, grad = layers.bce_with_logits(logits, targets)
        expected = (layers.sigmoid(logits) - targets) / logits.size
        np.testing.assert_allclose(grad, expected, atol=1e-12)


def batched_loss(network: Network, x: np.ndarray, y: np.ndarray) -> float:
    logits = network.forward(x)
    targets = np.broadcast_to(y[:, None, :].astype(logits.dtype), logits.shape)
    loss, _ = layers.bce_with_logits(logits, targets)
    return loss


class TestFiniteDifferences:
    def test_analytic_gradient_matches_central_differences(self):
        cfg = tiny_config()
        network = Network(cfg, seed=7, dtype=np.float64)
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, cfg.input_frames, cfg.input_bins, 6))
        y = np.zeros((2, cfg.class_count))
        y[0, 2] = 1
        y[1, 5] = 1
        y[1, 0] = 1

        _, grads = network.loss_and_gradients(x, y)

        step = 1e-4
        checked = 0
        for name in sorted(network.params):
            arr = network.params[name]
            for idx in rng.choice(arr.size, size=min(4, arr.size), replace=False):
                orig = arr.flat[idx]
                arr.flat[idx] = orig + step
                loss_plus = batched_loss(network, x, y)
                arr.flat[idx] = orig - step
                loss_minus = batched_loss(network, x, y)
                arr.flat[idx] = orig
                numeric = (loss_plus - loss_minus) / (2 * step)
                analytic = grads[name].flat[idx]
                denom = max(abs(numeric) + abs(analytic), 1e-8)
                assert abs(numeric - analytic) / denom < 1e-4, (
                    f"{name}[{idx}]: analytic {analytic}, numeric {numeric}"
                )
                checked += 1
        assert checked >= 50

    def test_dead_unit_has_zero_gradient(self):
        # a dense unit forced negative before its rectifier is off every
        # computational path, so its incoming weights get exactly zero grad
        cfg = tiny_config()
        network = Network(cfg, seed=3, dtype=np.float64)
        network.params["dense0/b"][4] = -1e3
        x = np.random.default_rng(5).standard_normal(
            (2, cfg.input_frames, cfg.input_bins, 6)
        )
        y = np.zeros((2, cfg.class_count))
        y[:, 1] = 1
        _, grads = network.loss_and_gradients(x, y)
        np.testing.assert_array_equal(grads["dense0/W"][:, 4], 0.0)
        assert grads["dense0/b"][4] == 0.0
        assert np.abs(grads["dense0/W"]).sum() > 0
