import numpy as np
import pytest

from avtse import kernels as K
from avtse.errors import ShapeError


def naive_conv(x, w, b, spec):
    """Independent index-loop convolution oracle (no GEMM, no stride tricks)."""
    n = len(spec.kernel)
    xp = np.pad(np.asarray(x, np.float64), ((0, 0), *spec.pad))
    out_shape = tuple(spec.out_extent(i, x.shape[1 + i]) for i in range(n))
    out = np.zeros((spec.out_channels, *out_shape))
    for co in range(spec.out_channels):
        for pos in np.ndindex(*out_shape):
            window = xp[(slice(None),) + tuple(
                slice(pos[i] * spec.stride[i], pos[i] * spec.stride[i] + spec.kernel[i])
                for i in range(n))]
            out[(co,) + pos] = np.sum(window * w[co])
    if b is not None:
        out += np.asarray(b, np.float64).reshape((-1,) + (1,) * n)
    return out.astype(np.float32)


class TestConv:
    def test_identity_1x1(self, rng):
        x = rng.standard_normal((3, 6, 5)).astype(np.float32)
        w = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        spec = K.ConvSpec((1, 1), (1, 1), ((0, 0), (0, 0)), 3, 3)
        np.testing.assert_array_equal(K.conv(x, w, None, spec), x)

    def test_vvad_stem_extents(self, rng):
        # (5,7,7) kernel, (1,2,2) stride, time-preserving pad, no spatial pad
        tv = 6
        x = rng.standard_normal((1, tv, 32, 32)).astype(np.float32)
        w = rng.standard_normal((32, 1, 5, 7, 7)).astype(np.float32) * 0.05
        spec = K.ConvSpec((5, 7, 7), (1, 2, 2), ((4, 0), (0, 0), (0, 0)),
                          1, 32, causal_time=True)
        out = K.conv(x, w, None, spec)
        assert out.shape == (32, tv, 13, 13)
        np.testing.assert_allclose(out, naive_conv(x, w, None, spec),
                                   rtol=0, atol=1e-4)

    def test_causal_1d_hand_case(self):
        x = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
        w = np.array([[[1.0, 1.0]]], dtype=np.float32)
        spec = K.ConvSpec((2,), (1,), ((1, 0),), 1, 1, causal_time=True)
        np.testing.assert_allclose(K.conv(x, w, None, spec), [[1.0, 3.0, 5.0]])

    def test_matches_naive_oracle_randomized(self):
        rng = np.random.default_rng(7)
        for case in range(1000):
            n = int(rng.integers(1, 5))  # 1..4 spatial axes, rank up to 5
            cin = int(rng.integers(1, 4))
            cout = int(rng.integers(1, 4))
            kernel = tuple(int(rng.integers(1, 4)) for _ in range(n))
            stride = tuple(int(rng.integers(1, 3)) for _ in range(n))
            pad = tuple((int(rng.integers(0, 3)), int(rng.integers(0, 3)))
                        for _ in range(n))
            spatial = tuple(int(rng.integers(k, k + 4)) for k in kernel)
            spec = K.ConvSpec(kernel, stride, pad, cin, cout)
            x = rng.standard_normal((cin, *spatial)).astype(np.float32)
            w = rng.standard_normal((cout, cin, *kernel)).astype(np.float32)
            b = rng.standard_normal(cout).astype(np.float32)
            np.testing.assert_allclose(
                K.conv(x, w, b, spec), naive_conv(x, w, b, spec),
                rtol=0, atol=1e-5, err_msg=f"case {case}: {spec}")

    def test_causal_future_independence(self):
        rng = np.random.default_rng(3)
        spec = K.ConvSpec((3, 3), (1, 1), ((2, 0), (1, 1)), 2, 4,
                          causal_time=True)
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        x = rng.standard_normal((2, 10, 5)).astype(np.float32)
        full = K.conv(x, w, None, spec)
        for t in (0, 3, 7):
            zeroed = x.copy()
            zeroed[:, t + 1:] = 0.0
            np.testing.assert_array_equal(
                K.conv(zeroed, w, None, spec)[:, :t + 1], full[:, :t + 1])

    def test_shape_errors(self, rng):
        x = rng.standard_normal((2, 5)).astype(np.float32)
        w = rng.standard_normal((3, 2, 2)).astype(np.float32)
        spec = K.ConvSpec((2,), (1,), ((0, 0),), 4, 3)
        with pytest.raises(ShapeError, match="channels"):
            K.conv(x, w, None, spec)
        spec = K.ConvSpec((9,), (1,), ((0, 0),), 2, 3)
        with pytest.raises(ShapeError, match="zero-size"):
            K.conv(x, rng.standard_normal((3, 2, 9)).astype(np.float32), None, spec)
        with pytest.raises(ShapeError):
            K.ConvSpec((2,), (1,), ((1, 1),), 2, 3, causal_time=True)

    def test_purity(self, rng):
        x = rng.standard_normal((2, 6)).astype(np.float32)
        snapshot = x.copy()
        spec = K.ConvSpec((3,), (1,), ((2, 0),), 2, 2, causal_time=True)
        K.conv(x, rng.standard_normal((2, 2, 3)).astype(np.float32), None, spec)
        np.testing.assert_array_equal(x, snapshot)


class TestConvTranspose:
    def test_matches_upsample_oracle(self, rng):
        # scatter definition checked against an explicit python accumulation
        cin, cout, t_len, f_len = 3, 2, 4, 5
        x = rng.standard_normal((cin, t_len, f_len)).astype(np.float32)
        w = rng.standard_normal((cin, cout, 2, 5)).astype(np.float32)
        out = K.conv_transpose(x, w, None, (1, 2), ((0, 1), (2, 2)))
        full_t, full_f = (t_len - 1) + 2, (f_len - 1) * 2 + 5
        ref = np.zeros((cout, full_t, full_f))
        for ci in range(cin):
            for t in range(t_len):
                for f in range(f_len):
                    ref[:, t:t + 2, 2 * f:2 * f + 5] += x[ci, t, f] * w[ci]
        ref = ref[:, 0:full_t - 1, 2:full_f - 2]
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-5)
        assert out.shape == (cout, t_len, 2 * f_len - 1)

    def test_frequency_ladder_inverse(self, rng):
        # 21 -> 41 -> 81 -> 161 with kernel 5, stride 2, pad 2
        x = rng.standard_normal((4, 3, 21)).astype(np.float32)
        for f_out in (41, 81, 161):
            w = rng.standard_normal((4, 4, 2, 5)).astype(np.float32)
            x = K.conv_transpose(x, w, None, (1, 2), ((0, 1), (2, 2)))
            assert x.shape == (4, 3, f_out)


class TestLstm:
    def _weights(self, hidden, inp, fill=0.0):
        return K.LstmWeights(
            w_ih=np.full((4 * hidden, inp), fill, dtype=np.float32),
            w_hh=np.full((4 * hidden, hidden), fill, dtype=np.float32),
            b=np.zeros(4 * hidden, dtype=np.float32))

    def test_zero_weights_zero_state(self, backend_guard, rng):
        w = self._weights(4, 3)
        x = rng.standard_normal((2, 3)).astype(np.float32)
        h, c = np.zeros((2, 4), np.float32), np.zeros((2, 4), np.float32)
        h2, c2 = K.lstm_step(x, h, c, w)
        np.testing.assert_array_equal(h2, 0.0)
        np.testing.assert_array_equal(c2, 0.0)

    def test_saturated_forget_gate_preserves_cell(self, backend_guard, rng):
        hidden = 4
        w = self._weights(hidden, 3)
        w.b[hidden:2 * hidden] = 20.0  # forget gate saturated at 1
        x = rng.standard_normal((2, 3)).astype(np.float32)
        c = rng.standard_normal((2, hidden)).astype(np.float32)
        h = np.zeros_like(c)
        _, c2 = K.lstm_step(x, h, c, w)
        np.testing.assert_allclose(c2, c, rtol=0, atol=1e-6)

    def test_scalar_hand_computation(self, backend_guard):
        # single unit, hand-picked weights, checked against a scalar oracle
        w = K.LstmWeights(
            w_ih=np.array([[0.5], [-0.3], [0.8], [0.2]], dtype=np.float32),
            w_hh=np.array([[0.1], [0.4], [-0.2], [0.6]], dtype=np.float32),
            b=np.array([0.05, -0.1, 0.2, 0.0], dtype=np.float32))
        x, h, c = 0.7, -0.4, 0.3

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        gi = sig(0.5 * x + 0.1 * h + 0.05)
        gf = sig(-0.3 * x + 0.4 * h - 0.1)
        gg = np.tanh(0.8 * x - 0.2 * h + 0.2)
        go = sig(0.2 * x + 0.6 * h + 0.0)
        c_ref = gf * c + gi * gg
        h_ref = go * np.tanh(c_ref)
        h2, c2 = K.lstm_step(np.array([[x]], np.float32),
                             np.array([[h]], np.float32),
                             np.array([[c]], np.float32), w)
        assert abs(h2[0, 0] - h_ref) < 1e-6
        assert abs(c2[0, 0] - c_ref) < 1e-6

    def test_nonfinite_rejected(self, backend_guard):
        w = self._weights(2, 2)
        bad = np.array([[np.nan, 0.0]], dtype=np.float32)
        ok = np.zeros((1, 2), np.float32)
        with pytest.raises(ShapeError, match="finite"):
            K.lstm_step(bad, ok, ok, w)

    def test_backend_parity(self, rng):
        if "compiled" not in K.available_backends():
            pytest.skip("compiled lane unavailable")
        w = K.LstmWeights(
            w_ih=rng.standard_normal((16, 3)).astype(np.float32),
            w_hh=rng.standard_normal((16, 4)).astype(np.float32),
            b=rng.standard_normal(16).astype(np.float32))
        x = rng.standard_normal((5, 3)).astype(np.float32)
        h = rng.standard_normal((5, 4)).astype(np.float32)
        c = rng.standard_normal((5, 4)).astype(np.float32)
        K.set_backend("python")
        ref = K.lstm_step(x, h, c, w)
        K.set_backend("compiled")
        fast = K.lstm_step(x, h, c, w)
        K.set_backend("auto")
        np.testing.assert_allclose(fast[0], ref[0], rtol=0, atol=1e-6)
        np.testing.assert_allclose(fast[1], ref[1], rtol=0, atol=1e-6)


class TestNormalize:
    def test_layer_norm_constant_input(self, backend_guard):
        x = np.full((1, 8), 3.25, dtype=np.float32)
        out = K.normalize(x, "layer_norm", np.ones(8, np.float32),
                          np.zeros(8, np.float32))
        np.testing.assert_allclose(out, 0.0, atol=1e-4)

    def test_layer_norm_three_values(self, backend_guard):
        x = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
        out = K.normalize(x, "layer_norm", np.ones(3, np.float32),
                          np.zeros(3, np.float32))
        np.testing.assert_allclose(out[0], [-1.2247, 0.0, 1.2247], atol=1e-3)

    def test_layer_norm_statistics(self, backend_guard, rng):
        x = rng.standard_normal((40, 64)).astype(np.float32) * 3 + 1
        out = K.normalize(x, "layer_norm", np.ones(64, np.float32),
                          np.zeros(64, np.float32))
        assert np.abs(out.mean(axis=-1)).max() < 1e-5
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_batch_norm_identity_stats(self, rng):
        x = rng.standard_normal((3, 10)).astype(np.float32)
        out = K.normalize(x, "batch_norm_inference", np.ones(3, np.float32),
                          np.zeros(3, np.float32),
                          stats=(np.zeros(3, np.float32), np.ones(3, np.float32)),
                          axis=0)
        np.testing.assert_allclose(out, x, rtol=1e-5, atol=1e-5)

    def test_batch_norm_requires_stats(self):
        with pytest.raises(ShapeError, match="running"):
            K.normalize(np.zeros((2, 2), np.float32), "batch_norm_inference",
                        np.ones(2, np.float32), np.zeros(2, np.float32))


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(K.softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_overflow_safe(self):
        out = K.softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)

    def test_reference_values(self):
        out = K.softmax(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_rows_sum_to_one(self, rng):
        x = rng.standard_normal((50, 17)).astype(np.float32) * 8
        out = K.softmax(x, axis=-1)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert (out >= 0).all() and (out <= 1).all()
        moderate = K.softmax(rng.standard_normal((50, 17)).astype(np.float32))
        assert (moderate > 0).all() and (moderate < 1).all()


class TestAttentionStep:
    def test_matches_python_reference(self, backend_guard, rng):
        q = rng.standard_normal((6, 8)).astype(np.float32)
        k = rng.standard_normal((6, 10, 8)).astype(np.float32)
        v = rng.standard_normal((6, 10, 8)).astype(np.float32)
        out = K.attention_step(q, k, v, n_heads=2)
        # plain per-row, per-head reference
        for b in range(6):
            for h in range(2):
                sl = slice(4 * h, 4 * h + 4)
                scores = k[b, :, sl] @ q[b, sl] / np.sqrt(4.0)
                alpha = np.exp(scores - scores.max())
                alpha /= alpha.sum()
                ref = alpha @ v[b, :, sl]
                np.testing.assert_allclose(out[b, sl], ref, rtol=0, atol=1e-5)

    def test_zero_window_rows_carry_softmax_mass(self, backend_guard):
        # a zero key scores exp(0); with one real frame alpha splits evenly
        q = np.ones((1, 4), dtype=np.float32)
        k = np.zeros((1, 3, 4), dtype=np.float32)
        v = np.zeros((1, 3, 4), dtype=np.float32)
        v[0, 0] = 2.0
        out = K.attention_step(q, k, v, n_heads=1)
        np.testing.assert_allclose(out[0], 2.0 / 3.0, atol=1e-6)


class TestActivations:
    def test_prelu_channel_slopes(self):
        x = np.array([[-2.0, 4.0], [-1.0, -1.0]], dtype=np.float32)
        slope = np.array([0.5, -0.25], dtype=np.float32)
        out = K.prelu(x, slope, channel_axis=0)
        np.testing.assert_allclose(out, [[-1.0, 4.0], [0.25, 0.25]])

    def test_silu_reference(self):
        x = np.array([0.0, 1.0, -1.0], dtype=np.float32)
        np.testing.assert_allclose(K.silu(x), x / (1 + np.exp(-x)), atol=1e-6)

    def test_sigmoid_extremes_stable(self):
        out = K.sigmoid(np.array([-500.0, 0.0, 500.0], dtype=np.float32))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-7)
