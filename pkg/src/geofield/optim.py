"""Adam optimizer with bias correction (Kingma & Ba)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second-moment accumulators matching a flat parameter list."""

    step: int
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params, grads, state):
    """One update; returns the new parameter list and advances the state.

    Moment arrays are replaced (not mutated) so previously captured
    references, e.g. inside a just-written checkpoint, stay valid.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("parameter, gradient, and moment counts disagree")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"grad {i} shape {g.shape} != param shape {p.shape}")
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * (g * g)
        state.m[i] = m
        state.v[i] = v
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p - step.astype(p.dtype, copy=False))
    return new_params, state
