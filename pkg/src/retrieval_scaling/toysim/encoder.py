"""Shared dual encoder: hashed bag of tokens -> tanh layers -> affine projection.

The hashed featurizer has no trainable parameters and plays the role of the
embedding table; everything after it counts as model size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

# Knuth multiplicative hash constant
_HASH_MULT = 2654435761
_HASH_MOD = 2 ** 32


@dataclass(eq=False)
class Encoder:
    """``params`` alternates weight matrices and bias vectors, projection last."""

    feature_dim: int
    params: list = field(default_factory=list)

    @property
    def hidden_widths(self) -> list:
        return [w.shape[1] for w in self.params[0:-2:2]]

    @property
    def embedding_dim(self) -> int:
        return self.params[-1].shape[0]

    def copy(self) -> "Encoder":
        return Encoder(self.feature_dim, [p.copy() for p in self.params])


def hash_buckets(tokens, feature_dim: int) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    return ((tokens * _HASH_MULT) % _HASH_MOD) % feature_dim


def featurize(token_lists, feature_dim: int) -> np.ndarray:
    """L2-normalised hashed token counts, one row per sequence."""
    token_lists = list(token_lists)
    out = np.zeros((len(token_lists), feature_dim))
    for row, tokens in enumerate(token_lists):
        if len(tokens) == 0:
            raise InputError("cannot encode an empty token sequence")
        np.add.at(out[row], hash_buckets(tokens, feature_dim), 1.0)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out


def init_encoder(feature_dim: int, hidden_widths, embedding_dim: int = 32,
                 seed: int = 0) -> Encoder:
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    widths = [int(feature_dim), *(int(w) for w in hidden_widths), int(embedding_dim)]
    if any(w < 1 for w in widths):
        raise InputError(f"all layer dimensions must be >= 1, got {widths}")
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(rng.uniform(-bound, bound, size=fan_out))
    return Encoder(int(feature_dim), params)


def param_count(encoder: Encoder) -> int:
    """Non-embedding parameters: every layer weight and bias, featurizer excluded."""
    return int(sum(p.size for p in encoder.params))


def analytic_param_count(feature_dim: int, hidden_widths, embedding_dim: int) -> int:
    widths = [feature_dim, *hidden_widths, embedding_dim]
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def forward(params, X):
    """Forward pass on a feature matrix; returns (embeddings, layer inputs for backprop)."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers - 1):
        h = np.tanh(h @ params[2 * i] + params[2 * i + 1])
        acts.append(h)
    return h @ params[-2] + params[-1], acts


def backward(params, acts, grad_out):
    """Gradients of a scalar w.r.t. ``params`` given d(scalar)/d(embeddings)."""
    grads = [None] * len(params)
    g = grad_out
    n_layers = len(params) // 2
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            # acts[i] = tanh(...), derivative 1 - tanh^2
            g = (g @ params[2 * i].T) * (1.0 - acts[i] ** 2)
    return grads


def encode_features(encoder: Encoder, X) -> np.ndarray:
    return forward(encoder.params, np.atleast_2d(X))[0]


def encode(encoder: Encoder, tokens) -> np.ndarray:
    """Embedding of one token sequence."""
    if len(tokens) == 0:
        raise InputError("cannot encode an empty token sequence")
    return encode_features(encoder, featurize([tokens], encoder.feature_dim))[0]
