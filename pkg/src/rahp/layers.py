"""Small shared building blocks: affine maps and two-layer MLPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import xavier_uniform_init
from .tensor import DEFAULT_DTYPE, Tensor, add, dropout, matmul, relu


def affine(w, b, x):
    """w @ x + b for a 1-D input."""
    return add(matmul(w, x), b)


@dataclass
class MLPParams:
    """affine -> ReLU -> affine, the prediction head used throughout."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def build(cls, in_dim, hidden_dim, out_dim, rng, dtype=DEFAULT_DTYPE):
        return cls(
            w1=Tensor(xavier_uniform_init(in_dim, hidden_dim, rng, dtype), requires_grad=True),
            b1=Tensor(np.zeros(hidden_dim, dtype=dtype), requires_grad=True),
            w2=Tensor(xavier_uniform_init(hidden_dim, out_dim, rng, dtype), requires_grad=True),
            b2=Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True),
        )

    @property
    def in_dim(self):
        return self.w1.shape[1]

    @property
    def out_dim(self):
        return self.w2.shape[0]

    def apply(self, x, dropout_rate=0.0, rng=None):
        if x.shape != (self.in_dim,):
            raise ValueError(f"MLP expects input of shape ({self.in_dim},), got {x.shape}")
        hidden = relu(affine(self.w1, self.b1, x))
        if dropout_rate > 0.0:
            hidden = dropout(hidden, dropout_rate, rng)
        return affine(self.w2, self.b2, hidden)

    def named(self, prefix):
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2
