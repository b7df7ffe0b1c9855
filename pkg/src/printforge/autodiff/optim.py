"""Bias-corrected Adam over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ShapeMismatch


@dataclass
class AdamState:
    """First/second moment buffers plus the shared hyperparameters.

    Moments live in the parameter dtype; the scalar schedule in floats.
    """

    lr: float
    beta1: float
    beta2: float
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, params, lr, beta1, beta2, eps=1e-8):
        if lr <= 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1):
            raise ValueError(f"bad Adam schedule lr={lr} beta1={beta1} beta2={beta2}")
        state = cls(lr=float(lr), beta1=float(beta1), beta2=float(beta2), eps=float(eps))
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params, grads, state):
    """One update; mutates params and state in place and returns both.

    Parameters without a gradient entry are left untouched, moments
    included, so disjoint sub-networks can share one parameter dict.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(
                f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}"
            )
        g = np.asarray(g, dtype=p.dtype)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """Object wrapper for trainers that tick one optimizer per network."""

    def __init__(self, params, lr, beta1, beta2, eps=1e-8):
        self.params = params
        self.state = AdamState.fresh(params, lr, beta1, beta2, eps)

    def step(self, grads):
        adam_step(self.params, grads, self.state)
