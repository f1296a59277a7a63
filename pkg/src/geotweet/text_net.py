"""Character-level recurrent convolutional text encoder with self-attention.

Pipeline per tweet: char embeddings -> bi-LSTM contexts -> per-position
projection over [left context ; char ; right context] -> windowed
max-over-time pooling -> attention-weighted mean of the span vectors.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .init import embedding_table, glorot, zeros

# gate layout inside the fused LSTM weight matrices
_GATES = ("input", "forget", "cell", "output")


def _lstm_params(rng, prefix, emb_size, hidden):
    p = {
        f"{prefix}.Wx": glorot(rng, (emb_size, 4 * hidden), emb_size, 4 * hidden),
        f"{prefix}.Wh": glorot(rng, (hidden, 4 * hidden), hidden, 4 * hidden),
        f"{prefix}.b": zeros((4 * hidden,)),
    }
    # forget-gate bias starts at 1.0
    p[f"{prefix}.b"].data[hidden:2 * hidden] = 1.0
    return p


def _lstm_step(x_t, h, c, Wx, Wh, b, hidden):
    gates = ad.add(ad.add(ad.matmul(x_t, Wx), ad.matmul(h, Wh)), b)
    i = ad.sigmoid(gates[:, 0 * hidden:1 * hidden])
    f = ad.sigmoid(gates[:, 1 * hidden:2 * hidden])
    g = ad.tanh(gates[:, 2 * hidden:3 * hidden])
    o = ad.sigmoid(gates[:, 3 * hidden:4 * hidden])
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


class TextNetwork:
    """Produces one feature vector per tweet plus span attention weights."""

    def __init__(self, rng, vocab_size, emb_size, out_size, window,
                 attn_size=None, prefix="text"):
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.emb_size = emb_size
        self.hidden = emb_size  # contexts concatenate to 3E
        self.out_size = out_size
        self.window = window
        self.attn_size = attn_size if attn_size is not None else out_size
        self.prefix = prefix
        self.params = {f"{prefix}.emb": embedding_table(rng, vocab_size, emb_size)}
        self.params.update(_lstm_params(rng, f"{prefix}.fwd", emb_size, self.hidden))
        self.params.update(_lstm_params(rng, f"{prefix}.bwd", emb_size, self.hidden))
        self.params[f"{prefix}.Wg"] = glorot(
            rng, (3 * emb_size, out_size), 3 * emb_size, out_size)
        self.params[f"{prefix}.bg"] = zeros((out_size,))
        self.params[f"{prefix}.Wv"] = glorot(
            rng, (out_size, self.attn_size), out_size, self.attn_size)
        self.params[f"{prefix}.bv"] = zeros((self.attn_size,))
        self.params[f"{prefix}.v"] = glorot(
            rng, (self.attn_size, 1), self.attn_size, 1)

    def _p(self, name):
        return self.params[f"{self.prefix}.{name}"]

    def char_vectors(self, text_ids):
        """Per-position embedding lookups; text_ids is a (batch, T) int array."""
        text_ids = np.asarray(text_ids)
        emb = self._p("emb")
        return [ad.embedding(text_ids[:, t], emb) for t in range(text_ids.shape[1])]

    def bilstm_contexts(self, xs):
        """Forward and backward hidden-state sequences for embedded chars."""
        T = len(xs)
        batch = xs[0].shape[0]
        zero = ad.Tensor(np.zeros((batch, self.hidden)))
        fwd, bwd = [], []
        h, c = zero, zero
        Wx, Wh, b = self._p("fwd.Wx"), self._p("fwd.Wh"), self._p("fwd.b")
        for t in range(T):
            h, c = _lstm_step(xs[t], h, c, Wx, Wh, b, self.hidden)
            fwd.append(h)
        h, c = zero, zero
        Wx, Wh, b = self._p("bwd.Wx"), self._p("bwd.Wh"), self._p("bwd.b")
        for t in reversed(range(T)):
            h, c = _lstm_step(xs[t], h, c, Wx, Wh, b, self.hidden)
            bwd.append(h)
        bwd.reverse()
        return fwd, bwd

    def contextual_projection(self, xs, fwd, bwd):
        """ReLU projection of [h_fwd[t-1] ; x_t ; h_bwd[t+1]] for every position.

        Out-of-range contexts are zero vectors. Returns a (T, batch, O) tensor.
        """
        T = len(xs)
        batch = xs[0].shape[0]
        zero = ad.Tensor(np.zeros((batch, self.hidden)))
        stacked = ad.concat(
            [ad.concat([fwd[t - 1] if t > 0 else zero,
                        xs[t],
                        bwd[t + 1] if t + 1 < T else zero], axis=1)
             for t in range(T)],
            axis=0)
        proj = ad.relu(ad.add(ad.matmul(stacked, self._p("Wg")), self._p("bg")))
        return ad.reshape(proj, (T, batch, self.out_size))

    def windowed_max_pool(self, g_seq, window=None):
        """Elementwise max over each length-P window; yields T-P+1 span vectors."""
        P = self.window if window is None else window
        T = g_seq.shape[0]
        if P > T:
            raise ValueError(f"pooling window {P} exceeds sequence length {T}")
        spans = T - P + 1
        pooled = g_seq[0:spans]
        for k in range(1, P):
            pooled = ad.maximum(pooled, g_seq[k:k + spans])
        return pooled

    def attention_pool(self, pooled):
        """Softmax-weighted mean of span vectors; also returns the weights."""
        spans, batch, O = pooled.shape
        flat = ad.reshape(pooled, (spans * batch, O))
        hidden = ad.tanh(ad.add(ad.matmul(flat, self._p("Wv")), self._p("bv")))
        scores = ad.reshape(ad.matmul(hidden, self._p("v")), (spans, batch))
        weights = ad.softmax(ad.transpose(scores, (1, 0)))  # (batch, spans)
        spans_bso = ad.transpose(pooled, (1, 0, 2))
        weighted = ad.mul(ad.reshape(weights, (batch, spans, 1)), spans_bso)
        return ad.tsum(weighted, axis=1), weights

    def forward(self, text_ids):
        xs = self.char_vectors(text_ids)
        fwd, bwd = self.bilstm_contexts(xs)
        g_seq = self.contextual_projection(xs, fwd, bwd)
        pooled = self.windowed_max_pool(g_seq)
        return self.attention_pool(pooled)


def top_attended_spans(text, weights, window, k=3):
    """Top-k (start, substring, weight) spans for one example, by weight."""
    order = np.argsort(-np.asarray(weights), kind="stable")[:k]
    return [(int(t), text[int(t):int(t) + window], float(weights[t])) for t in order]
