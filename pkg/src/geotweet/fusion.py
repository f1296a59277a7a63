"""Feature fusion, penultimate representation and softmax classifier."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .init import glorot, zeros


class FusionClassifier:
    """Concatenates feature vectors, optionally corrupts them, and classifies."""

    def __init__(self, rng, input_dim, penultimate_dim, n_classes, prefix="fuse"):
        self.input_dim = input_dim
        self.penultimate_dim = penultimate_dim
        self.n_classes = n_classes
        self.prefix = prefix
        self.params = {
            f"{prefix}.Wr": glorot(rng, (input_dim, penultimate_dim),
                                   input_dim, penultimate_dim),
            f"{prefix}.br": zeros((penultimate_dim,)),
            f"{prefix}.Wout": glorot(rng, (penultimate_dim, n_classes),
                                     penultimate_dim, n_classes),
            f"{prefix}.bout": zeros((n_classes,)),
        }

    def fuse(self, features, noise_sigma=0.0, dropout_keep=1.0, train=False,
             rng=None):
        """Concatenate features; in train mode add Gaussian noise then dropout."""
        fused = ad.concat(features, axis=1) if len(features) > 1 else features[0]
        if train:
            if noise_sigma > 0.0:
                fused = ad.gaussian_noise(fused, noise_sigma, rng)
            if dropout_keep < 1.0:
                fused = ad.dropout(fused, dropout_keep, rng, train=True)
        return fused

    def penultimate(self, fused):
        return ad.tanh(ad.add(ad.matmul(fused, self.params[f"{self.prefix}.Wr"]),
                              self.params[f"{self.prefix}.br"]))

    def classify(self, r):
        logits = ad.add(ad.matmul(r, self.params[f"{self.prefix}.Wout"]),
                        self.params[f"{self.prefix}.bout"])
        return ad.softmax(logits)


def predict_labels(probs):
    """Argmax predictions with lowest-index tie-break."""
    return np.argmax(np.asarray(probs), axis=-1)


def extrema_loss(r, alpha):
    """Penalty alpha * mean |(r_i - 1)(r_i + 1)| pushing elements toward +-1."""
    if alpha == 0.0:
        return ad.Tensor(0.0)
    gap = ad.absolute(ad.mul(ad.sub(r, 1.0), ad.add(r, 1.0)))
    return ad.mul(ad.tmean(gap), alpha)
