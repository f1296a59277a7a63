import math

import numpy as np
import pytest

from geotweet import autodiff as ad
from geotweet.text_net import TextNetwork, top_attended_spans

from conftest import finite_difference_check


def make_net(vocab_size=9, emb=3, out=4, window=3, attn=None, seed=0):
    return TextNetwork(np.random.default_rng(seed), vocab_size, emb, out,
                       window, attn)


def scalar_lstm_reference(xs, Wx, Wh, b, hidden):
    """Step-by-step scalar LSTM, independent of the tensor engine."""

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    T = len(xs)
    h = [0.0] * hidden
    c = [0.0] * hidden
    states = []
    for t in range(T):
        pre = [0.0] * (4 * hidden)
        for j in range(4 * hidden):
            for k in range(len(xs[t])):
                pre[j] += xs[t][k] * Wx[k][j]
            for k in range(hidden):
                pre[j] += h[k] * Wh[k][j]
            pre[j] += b[j]
        i = [sig(pre[j]) for j in range(hidden)]
        f = [sig(pre[hidden + j]) for j in range(hidden)]
        g = [math.tanh(pre[2 * hidden + j]) for j in range(hidden)]
        o = [sig(pre[3 * hidden + j]) for j in range(hidden)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(hidden)]
        h = [o[j] * math.tanh(c[j]) for j in range(hidden)]
        states.append(list(h))
    return states


class TestBilstm:
    def test_single_position(self):
        net = make_net()
        ids = np.array([[2]])
        fwd, bwd = net.bilstm_contexts(net.char_vectors(ids))
        assert len(fwd) == 1 and len(bwd) == 1
        assert fwd[0].shape == (1, net.hidden)

    def test_zero_weights_give_zero_states(self):
        net = make_net()
        for name, p in net.params.items():
            if "fwd" in name or "bwd" in name:
                p.data[...] = 0.0
        ids = np.array([[2, 3, 4]])
        fwd, bwd = net.bilstm_contexts(net.char_vectors(ids))
        for h in fwd + bwd:
            np.testing.assert_allclose(h.data, 0.0)

    def test_matches_scalar_reference(self):
        net = make_net(seed=4)
        ids = np.array([[2, 5, 3, 7]])
        xs = net.char_vectors(ids)
        fwd, _ = net.bilstm_contexts(xs)
        ref = scalar_lstm_reference(
            [x.data[0].tolist() for x in xs],
            net.params["text.fwd.Wx"].data.tolist(),
            net.params["text.fwd.Wh"].data.tolist(),
            net.params["text.fwd.b"].data.tolist(),
            net.hidden)
        for t, h in enumerate(fwd):
            np.testing.assert_allclose(h.data[0], ref[t], atol=1e-12)

    def test_backward_direction_matches_reversed_reference(self):
        net = make_net(seed=5)
        ids = np.array([[2, 5, 3]])
        xs = net.char_vectors(ids)
        _, bwd = net.bilstm_contexts(xs)
        ref = scalar_lstm_reference(
            [x.data[0].tolist() for x in reversed(xs)],
            net.params["text.bwd.Wx"].data.tolist(),
            net.params["text.bwd.Wh"].data.tolist(),
            net.params["text.bwd.b"].data.tolist(),
            net.hidden)
        # bwd[t] consumed positions T-1..t, i.e. ref step T-1-t
        for t, h in enumerate(bwd):
            np.testing.assert_allclose(h.data[0], ref[len(xs) - 1 - t],
                                       atol=1e-12)

    def test_forget_bias_initialized_to_one(self):
        net = make_net()
        H = net.hidden
        np.testing.assert_allclose(net.params["text.fwd.b"].data[H:2 * H], 1.0)
        np.testing.assert_allclose(net.params["text.fwd.b"].data[:H], 0.0)


class TestContextualProjection:
    def test_projection_input_width_is_3e(self):
        net = make_net()
        assert net.params["text.Wg"].data.shape[0] == 3 * net.emb_size

    def test_zero_projection_weights(self):
        net = make_net()
        net.params["text.Wg"].data[...] = 0.0
        net.params["text.bg"].data[...] = 0.0
        ids = np.array([[2, 3, 4, 5]])
        xs = net.char_vectors(ids)
        fwd, bwd = net.bilstm_contexts(xs)
        g = net.contextual_projection(xs, fwd, bwd)
        np.testing.assert_allclose(g.data, 0.0)

    def test_boundary_contexts_are_zero(self):
        # with recurrent weights zeroed, all contexts are zero, so every
        # position projects only its own character embedding
        net = make_net()
        for name in ("fwd.Wx", "fwd.Wh", "fwd.b", "bwd.Wx", "bwd.Wh", "bwd.b"):
            net.params[f"text.{name}"].data[...] = 0.0
        ids = np.array([[2, 3, 2]])
        xs = net.char_vectors(ids)
        fwd, bwd = net.bilstm_contexts(xs)
        g = net.contextual_projection(xs, fwd, bwd)
        np.testing.assert_allclose(g.data[0], g.data[2], atol=1e-12)


class TestWindowedMaxPool:
    def test_full_window_single_span(self):
        net = make_net(window=4)
        g = ad.Tensor(np.random.default_rng(0).standard_normal((4, 2, 3)))
        pooled = net.windowed_max_pool(g)
        assert pooled.shape == (1, 2, 3)
        np.testing.assert_allclose(pooled.data[0], g.data.max(axis=0))

    def test_span_count_300_10(self):
        net = make_net(window=10)
        g = ad.Tensor(np.zeros((300, 1, 2)))
        assert net.windowed_max_pool(g).shape[0] == 291

    def test_sliding_maxima(self):
        net = make_net(window=2)
        g = ad.Tensor(np.array([1.0, 3.0, 2.0]).reshape(3, 1, 1))
        pooled = net.windowed_max_pool(g)
        np.testing.assert_allclose(pooled.data.reshape(-1), [3.0, 3.0])

    def test_window_larger_than_sequence_rejected(self):
        net = make_net(window=5)
        with pytest.raises(ValueError, match="window"):
            net.windowed_max_pool(ad.Tensor(np.zeros((3, 1, 2))))

    @pytest.mark.parametrize("T,P", [(5, 1), (5, 5), (12, 7)])
    def test_span_count_formula(self, T, P):
        net = make_net(window=P)
        g = ad.Tensor(np.zeros((T, 1, 2)))
        assert net.windowed_max_pool(g).shape[0] == T - P + 1


class TestAttentionPool:
    def test_single_span_weight_one(self):
        net = make_net()
        span = np.random.default_rng(1).standard_normal((1, 2, net.out_size))
        f, weights = net.attention_pool(ad.Tensor(span))
        np.testing.assert_allclose(weights.data, 1.0)
        np.testing.assert_allclose(f.data, span[0])

    def test_identical_spans_uniform_weights(self):
        net = make_net()
        one = np.random.default_rng(2).standard_normal((1, 2, net.out_size))
        spans = np.repeat(one, 5, axis=0)
        _, weights = net.attention_pool(ad.Tensor(spans))
        np.testing.assert_allclose(weights.data, 0.2, atol=1e-12)

    def test_weights_sum_to_one_and_convex_hull(self):
        net = make_net(seed=7)
        spans = np.random.default_rng(3).standard_normal((6, 3, net.out_size))
        f, weights = net.attention_pool(ad.Tensor(spans))
        np.testing.assert_allclose(weights.data.sum(axis=1), 1.0, atol=1e-9)
        lo = spans.min(axis=0)
        hi = spans.max(axis=0)
        assert (f.data >= lo - 1e-12).all() and (f.data <= hi + 1e-12).all()


def test_full_network_gradient_check():
    net = make_net(vocab_size=8, emb=3, out=5, window=3, attn=4, seed=9)
    ids = np.random.default_rng(4).integers(0, 8, size=(2, 7))

    def loss():
        f, _ = net.forward(ids)
        return ad.tsum(ad.mul(f, f))

    finite_difference_check(net.params, loss, max_coords=3)


def test_degenerate_permutation_invariance():
    # with recurrent weights zeroed, far-apart identical characters make
    # identical per-position projections regardless of their order
    net = make_net(window=1)
    for name in ("fwd.Wx", "fwd.Wh", "fwd.b", "bwd.Wx", "bwd.Wh", "bwd.b"):
        net.params[f"text.{name}"].data[...] = 0.0
    a, _ = net.forward(np.array([[2, 3, 4, 5, 6]]))
    b, _ = net.forward(np.array([[6, 3, 4, 5, 2]]))
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_top_attended_spans_report():
    weights = np.array([0.1, 0.6, 0.3])
    spans = top_attended_spans("abcdef", weights, window=3, k=2)
    assert spans == [(1, "bcd", 0.6), (2, "cde", pytest.approx(0.3))]
