"""Coordinate MLP: positionally encoded inputs, density and view-dependent color.

The trunk is a ReLU MLP over the encoded position with one skip connection
that re-concatenates the encoding partway down. Density comes straight off
the trunk through softplus; color passes a feature layer, is joined with
the encoded view direction, and ends in a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import Var


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 256
    depth: int = 8
    skip_at: int = 4       # trunk layer whose input re-concatenates the encoding
    pos_freqs: int = 10
    dir_freqs: int = 4

    def __post_init__(self):
        if not (0 < self.skip_at < self.depth):
            raise ValueError(f"skip_at must fall inside the trunk, got {self.skip_at}")

    @property
    def pos_dim(self):
        return 3 + 6 * self.pos_freqs

    @property
    def dir_dim(self):
        return 3 + 6 * self.dir_freqs


def encode(x, num_freqs):
    """Sinusoidal features [x, sin(2^k pi x), cos(2^k pi x)] for k < num_freqs.

    Shape (..., 3) -> (..., 3 + 6*num_freqs); dtype is preserved.
    """
    x = np.asarray(x)
    feats = [x]
    for k in range(num_freqs):
        arg = (2.0 ** k) * np.pi * x
        feats.append(np.sin(arg))
        feats.append(np.cos(arg))
    return np.concatenate(feats, axis=-1).astype(x.dtype, copy=False)


@dataclass
class MlpWeights:
    """All parameters of one field network, as plain arrays or taped Vars."""

    config: MlpConfig
    trunk: list          # depth (w, b) pairs
    sigma: tuple         # hidden -> 1
    feat: tuple          # hidden -> hidden, linear
    head: tuple          # hidden + dir_dim -> hidden // 2
    rgb: tuple           # hidden // 2 -> 3

    def params(self):
        """Flat parameter list in the fixed serialization order."""
        out = []
        for w, b in self.trunk:
            out += [w, b]
        for w, b in (self.sigma, self.feat, self.head, self.rgb):
            out += [w, b]
        return out

    @classmethod
    def from_params(cls, config, arrays):
        """Rebuild from a flat list in params() order."""
        expected = 2 * config.depth + 8
        if len(arrays) != expected:
            raise ValueError(f"expected {expected} arrays, got {len(arrays)}")
        it = iter(arrays)
        pairs = [(w, b) for w, b in zip(it, it)]
        return cls(config, pairs[:config.depth], pairs[config.depth],
                   pairs[config.depth + 1], pairs[config.depth + 2],
                   pairs[config.depth + 3])


def _layer_dims(config):
    """(fan_in, fan_out) of every parameter pair in params() order."""
    dims = []
    for k in range(config.depth):
        fan_in = config.pos_dim if k == 0 else config.hidden
        if k == config.skip_at:
            fan_in = config.hidden + config.pos_dim
        dims.append((fan_in, config.hidden))
    dims.append((config.hidden, 1))
    dims.append((config.hidden, config.hidden))
    dims.append((config.hidden + config.dir_dim, config.hidden // 2))
    dims.append((config.hidden // 2, 3))
    return dims


def init_weights(config, rng, dtype=np.float32):
    """Glorot-uniform weights, zero biases."""
    pairs = []
    for fan_in, fan_out in _layer_dims(config):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
        b = np.zeros(fan_out, dtype=dtype)
        pairs.append((w, b))
    return MlpWeights(config, pairs[:config.depth], pairs[config.depth],
                      pairs[config.depth + 1], pairs[config.depth + 2],
                      pairs[config.depth + 3])


def lift(weights, tape):
    """Copy of the weight structure whose arrays are leaves on `tape`."""
    arrays = weights.params()
    leaves = [tape.leaf(a) for a in arrays]
    return MlpWeights.from_params(weights.config, leaves)


def grads_of(lifted):
    """Gradients of a lifted network after backward, in params() order."""
    return [p.grad for p in lifted.params()]


def forward(weights, x_enc, d_enc):
    """Field evaluation at encoded positions and directions.

    x_enc: (n, pos_dim), d_enc: (n, dir_dim). Returns (rgb, sigma) with
    shapes (n, 3) and (n,). Outputs are Vars; they are recorded only when
    the weights are lifted onto a tape.
    """
    cfg = weights.config
    h = x_enc
    for k, (w, b) in enumerate(weights.trunk):
        if k == cfg.skip_at:
            h = engine.concat([h, x_enc], axis=1)
        h = engine.relu(engine.matmul(h, w) + b)
    sigma = engine.softplus(engine.matmul(h, weights.sigma[0]) + weights.sigma[1])
    sigma = sigma.reshape(-1)
    feat = engine.matmul(h, weights.feat[0]) + weights.feat[1]
    joined = engine.concat([feat, d_enc], axis=1)
    hidden = engine.relu(engine.matmul(joined, weights.head[0]) + weights.head[1])
    rgb = engine.sigmoid(engine.matmul(hidden, weights.rgb[0]) + weights.rgb[1])
    return rgb, sigma
