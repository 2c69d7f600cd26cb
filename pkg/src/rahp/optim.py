"""Parameter initialization and the Adam optimizer.

Weight matrices follow the convention W (out_dim, in_dim) applied as
``W @ x``; :func:`xavier_uniform_init` therefore returns a
(fan_out, fan_in) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


def xavier_uniform_init(fan_in, fan_out, rng, dtype=DEFAULT_DTYPE):
    """Uniform samples on [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be positive, got ({fan_in}, {fan_out})")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus shared step bookkeeping."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place; returns the state.

    ``params`` maps name -> Tensor, ``grads`` maps name -> ndarray
    (missing names count as zero gradient).
    """
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape mismatch for {name}: {g.shape} vs {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= update.astype(p.data.dtype)
    return state


class Adam:
    """Convenience wrapper binding an AdamState to a parameter dict."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.state = AdamState.for_params(
            params, learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps
        )

    def step(self):
        grads = {
            name: p.grad for name, p in self.params.items() if p.grad is not None
        }
        adam_step(self.params, grads, self.state)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
