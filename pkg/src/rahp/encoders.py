"""LSTM cell, bidirectional encoding, masking and final-state extraction.

Sequences are right-padded: a mask's True positions always form a prefix.
``bilstm_encode`` runs both directions over the real tokens only and
zero-fills padded rows, which makes every downstream quantity exactly
padding-invariant.

``lstm_step`` is the reference cell (built from generic autodiff ops);
``lstm_sequence`` is a fused single-node pass over a whole sequence with
a hand-written backward, used by the encoders for speed. The two are
cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import xavier_uniform_init
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    add,
    concat,
    from_op,
    getitem,
    matmul,
    mul,
    sigmoid,
    tanh,
    zeros,
)


@dataclass
class LSTMCellParams:
    """Gate parameters; gate order along the 4H axis is i, f, g, o."""

    wx: Tensor  # (4H, D_in)
    wh: Tensor  # (4H, H)
    b: Tensor   # (4H,)

    @property
    def hidden_size(self):
        return self.wh.shape[1]

    @property
    def input_size(self):
        return self.wx.shape[1]

    @classmethod
    def build(cls, input_size, hidden_size, rng, dtype=DEFAULT_DTYPE, forget_bias=1.0):
        wx = xavier_uniform_init(input_size, 4 * hidden_size, rng, dtype)
        wh = xavier_uniform_init(hidden_size, 4 * hidden_size, rng, dtype)
        b = np.zeros(4 * hidden_size, dtype=dtype)
        b[hidden_size:2 * hidden_size] = forget_bias
        return cls(
            wx=Tensor(wx, requires_grad=True),
            wh=Tensor(wh, requires_grad=True),
            b=Tensor(b, requires_grad=True),
        )

    def named(self, prefix):
        yield f"{prefix}.wx", self.wx
        yield f"{prefix}.wh", self.wh
        yield f"{prefix}.b", self.b


@dataclass
class BiLSTMParams:
    fwd: LSTMCellParams
    bwd: LSTMCellParams

    @property
    def hidden_size(self):
        return self.fwd.hidden_size

    @property
    def output_dim(self):
        return 2 * self.fwd.hidden_size

    @classmethod
    def build(cls, input_size, hidden_size, rng, dtype=DEFAULT_DTYPE):
        return cls(
            fwd=LSTMCellParams.build(input_size, hidden_size, rng, dtype),
            bwd=LSTMCellParams.build(input_size, hidden_size, rng, dtype),
        )

    def named(self, prefix):
        yield from self.fwd.named(f"{prefix}.fwd")
        yield from self.bwd.named(f"{prefix}.bwd")


def lstm_step(x, h_prev, c_prev, params):
    """One gated update: sigmoid gates, tanh candidate and output squash."""
    hidden = params.hidden_size
    if x.shape != (params.input_size,):
        raise ValueError(f"lstm_step input shape {x.shape}, expected ({params.input_size},)")
    if h_prev.shape != (hidden,) or c_prev.shape != (hidden,):
        raise ValueError("lstm_step state shape mismatch")
    z = add(add(matmul(params.wx, x), matmul(params.wh, h_prev)), params.b)
    gate_i = sigmoid(getitem(z, slice(0, hidden)))
    gate_f = sigmoid(getitem(z, slice(hidden, 2 * hidden)))
    gate_g = tanh(getitem(z, slice(2 * hidden, 3 * hidden)))
    gate_o = sigmoid(getitem(z, slice(3 * hidden, 4 * hidden)))
    c = add(mul(gate_f, c_prev), mul(gate_i, gate_g))
    h = mul(gate_o, tanh(c))
    return h, c


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_sequence(seq, params, reverse=False):
    """Run one LSTM direction over (L, D_in); returns hidden rows (L, H).

    Row t always corresponds to input position t; with ``reverse`` the
    recurrence runs from the last row towards the first. Fused into one
    graph node with a hand-written full-sequence backward.
    """
    X = seq.data
    if X.ndim != 2:
        raise ValueError("lstm_sequence expects an (L, D) sequence")
    length = X.shape[0]
    if X.shape[1] != params.input_size:
        raise ValueError(
            f"lstm_sequence input dim {X.shape[1]}, expected {params.input_size}"
        )
    wx, wh, b = params.wx.data, params.wh.data, params.b.data
    hidden = params.hidden_size
    dtype = X.dtype

    order = np.arange(length - 1, -1, -1) if reverse else np.arange(length)
    xs = X[order]

    h = np.zeros(hidden, dtype=dtype)
    c = np.zeros(hidden, dtype=dtype)
    gates_i = np.empty((length, hidden), dtype=dtype)
    gates_f = np.empty((length, hidden), dtype=dtype)
    gates_g = np.empty((length, hidden), dtype=dtype)
    gates_o = np.empty((length, hidden), dtype=dtype)
    h_prevs = np.empty((length, hidden), dtype=dtype)
    c_prevs = np.empty((length, hidden), dtype=dtype)
    tanh_cs = np.empty((length, hidden), dtype=dtype)
    hs = np.empty((length, hidden), dtype=dtype)

    for k in range(length):
        z = wx @ xs[k] + wh @ h + b
        gi = _np_sigmoid(z[:hidden])
        gf = _np_sigmoid(z[hidden:2 * hidden])
        gg = np.tanh(z[2 * hidden:3 * hidden])
        go = _np_sigmoid(z[3 * hidden:])
        h_prevs[k] = h
        c_prevs[k] = c
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates_i[k], gates_f[k], gates_g[k], gates_o[k] = gi, gf, gg, go
        tanh_cs[k] = tc
        hs[k] = h

    out = np.empty((length, hidden), dtype=dtype)
    out[order] = hs

    def backward_fn(g):
        gp = g[order]
        d_x = np.zeros_like(xs)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(b)
        dh = np.zeros(hidden, dtype=dtype)
        dc = np.zeros(hidden, dtype=dtype)
        dz = np.empty(4 * hidden, dtype=dtype)
        for k in range(length - 1, -1, -1):
            dh_total = gp[k] + dh
            gi, gf, gg, go = gates_i[k], gates_f[k], gates_g[k], gates_o[k]
            tc = tanh_cs[k]
            d_o = dh_total * tc
            dc_total = dc + dh_total * go * (1.0 - tc * tc)
            d_i = dc_total * gg
            d_f = dc_total * c_prevs[k]
            d_g = dc_total * gi
            dc = dc_total * gf
            dz[:hidden] = d_i * gi * (1.0 - gi)
            dz[hidden:2 * hidden] = d_f * gf * (1.0 - gf)
            dz[2 * hidden:3 * hidden] = d_g * (1.0 - gg * gg)
            dz[3 * hidden:] = d_o * go * (1.0 - go)
            d_wx += np.outer(dz, xs[k])
            d_wh += np.outer(dz, h_prevs[k])
            d_b += dz
            d_x[k] = wx.T @ dz
            dh = wh.T @ dz
        d_seq = np.zeros_like(X)
        d_seq[order] = d_x
        return (d_seq, d_wx, d_wh, d_b)

    return from_op(out, (seq, params.wx, params.wh, params.b), backward_fn)


def validate_mask(mask, length):
    """Masks mark real tokens with True; True positions must be a prefix."""
    m = np.asarray(mask, dtype=bool)
    if m.shape != (length,):
        raise ValueError(f"mask shape {m.shape} does not match sequence length {length}")
    n = int(m.sum())
    if not m[:n].all():
        raise ValueError("mask True positions must form a prefix (right padding)")
    return m, n


def full_mask(length):
    return np.ones(length, dtype=bool)


def bilstm_encode(seq, mask, params_fwd, params_bwd):
    """Concatenate forward and backward hidden rows; padded rows are zero.

    Both directions see only the real tokens, so adding right padding
    (with a correct mask) cannot change any real row.
    """
    length = seq.shape[0]
    if length == 0:
        raise ValueError("empty sequence")
    m, n = validate_mask(mask, length)
    if n == 0:
        raise ValueError("empty sequence")
    real = seq if n == length else getitem(seq, slice(0, n))
    h_fwd = lstm_sequence(real, params_fwd)
    h_bwd = lstm_sequence(real, params_bwd, reverse=True)
    out = concat([h_fwd, h_bwd], axis=1)
    if n < length:
        pad = zeros((length - n, out.shape[1]), dtype=seq.data.dtype)
        out = concat([out, pad], axis=0)
    return out


def final_state(hiddens, mask):
    """[forward hidden at last real token; backward hidden at token 0]."""
    length, width = hiddens.shape
    hidden = width // 2
    m, n = validate_mask(mask, length)
    if n == 0:
        raise ValueError("empty sequence")
    fwd_last = getitem(hiddens, (n - 1, slice(0, hidden)))
    bwd_first = getitem(hiddens, (0, slice(hidden, width)))
    return concat([fwd_last, bwd_first])
