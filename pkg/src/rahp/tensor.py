"""Minimal reverse-mode automatic differentiation on numpy arrays.

Every value flowing through the model is a :class:`Tensor`: a numpy array
plus an optional gradient array and a link (``lineage``) to the operation
that produced it. Calling ``backward()`` on a scalar loss walks the graph
once in reverse topological order and accumulates ``grad`` on every
ancestor with ``requires_grad``.

Contracts worth knowing:

* repeated ``backward()`` calls accumulate gradients; call ``zero_grad``
  on parameters between optimizer steps,
* a detached tensor (``requires_grad=False``, no lineage) silently stops
  gradient flow,
* tensors are never mutated after creation except their ``grad`` field
  (and parameter ``data`` under the single-writer optimizer step), so a
  finished graph is safe to read from other threads.

Training runs in float32 by default; gradient checking requires float64.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class no_grad:
    """Context manager that stops graph construction (evaluation mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class _Node:
    """Lineage record: the parents of an op and how to push gradients back."""

    __slots__ = ("parents", "backward")

    def __init__(self, parents, backward):
        self.parents = parents
        self.backward = backward


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "lineage")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None and not isinstance(data, (np.ndarray, np.generic)):
            dtype = DEFAULT_DTYPE
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.lineage = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _coerce(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def from_op(data, parents, backward_fn):
    """Build an op output: graph node when grads are enabled and needed.

    ``backward_fn(grad)`` must return one gradient array (or None) per
    parent, in order. Extension ops in other modules use this hook.
    """
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out.lineage = _Node(tuple(parents), backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum a gradient down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    out = a.data + b.data

    def backward_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return from_op(out, (a, b), backward_fn)


def sub(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    out = a.data - b.data

    def backward_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return from_op(out, (a, b), backward_fn)


def mul(a, b):
    a = _coerce(a, b if isinstance(b, Tensor) else None)
    b = _coerce(b, a)
    out = a.data * b.data

    def backward_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return from_op(out, (a, b), backward_fn)


def neg(a):
    a = _coerce(a)

    def backward_fn(g):
        return (-g,)

    return from_op(-a.data, (a,), backward_fn)


def matmul(a, b):
    """Matrix product for the 1-D/2-D combinations the model needs."""
    a = _coerce(a)
    b = _coerce(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ValueError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != (b.data.shape[0]):
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward_fn(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return (g @ bd.T, ad.T @ g)
        if ad.ndim == 1 and bd.ndim == 2:
            return (bd @ g, np.outer(ad, g))
        if ad.ndim == 2 and bd.ndim == 1:
            return (np.outer(g, bd), ad.T @ g)
        return (g * bd, g * ad)  # 1-D @ 1-D

    return from_op(out, (a, b), backward_fn)


def dot(a, b):
    """Inner product of two 1-D tensors."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("dot expects 1-D tensors")
    return matmul(a, b)


def tanh(a):
    a = _coerce(a)
    out = np.tanh(a.data)

    def backward_fn(g):
        return (g * (1.0 - out * out),)

    return from_op(out, (a,), backward_fn)


def sigmoid(a):
    a = _coerce(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return from_op(out, (a,), backward_fn)


def relu(a):
    a = _coerce(a)
    out = np.maximum(a.data, 0.0)

    def backward_fn(g):
        return (g * (a.data > 0),)

    return from_op(out, (a,), backward_fn)


def texp(a):
    a = _coerce(a)
    out = np.exp(a.data)

    def backward_fn(g):
        return (g * out,)

    return from_op(out, (a,), backward_fn)


def tlog(a):
    a = _coerce(a)
    out = np.log(a.data)

    def backward_fn(g):
        return (g / a.data,)

    return from_op(out, (a,), backward_fn)


def clip(a, lo, hi):
    """Clamp values; gradient passes only where input lies inside [lo, hi]."""
    a = _coerce(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward_fn(g):
        return (g * inside,)

    return from_op(out, (a,), backward_fn)


def dropout(a, p, rng):
    """Inverted dropout with keep-scale 1/(1-p); caller gates on train mode."""
    a = _coerce(a)
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor(keep))


def tsum(a, axis=None):
    a = _coerce(a)
    out = a.data.sum(axis=axis)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.data.shape).astype(a.data.dtype, copy=True),)

    return from_op(out, (a,), backward_fn)


def mean(a, axis=None):
    a = _coerce(a)
    n = a.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def concat(tensors, axis=0):
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of empty list")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return from_op(out, tuple(tensors), backward_fn)


def stack(tensors):
    """Stack equal-shape tensors along a new leading axis."""
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ValueError("stack of empty list")
    out = np.stack([t.data for t in tensors])

    def backward_fn(g):
        return tuple(g[i] for i in range(len(tensors)))

    return from_op(out, tuple(tensors), backward_fn)


def getitem(a, key):
    a = _coerce(a)
    out = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[key] += g
        return (full,)

    return from_op(out, (a,), backward_fn)


def transpose(a):
    a = _coerce(a)
    if a.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")

    def backward_fn(g):
        return (g.T,)

    return from_op(a.data.T, (a,), backward_fn)


def reshape(a, shape):
    a = _coerce(a)
    orig = a.data.shape

    def backward_fn(g):
        return (g.reshape(orig),)

    return from_op(a.data.reshape(shape), (a,), backward_fn)


def zeros(shape, dtype=DEFAULT_DTYPE):
    return Tensor(np.zeros(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# attention / embedding primitives


def softmax_masked(logits, mask):
    """Numerically stabilized softmax restricted to unmasked positions.

    ``logits`` is a vector or a matrix (softmax per row). ``mask`` is a
    boolean array over the last axis (shared by all rows) or of the same
    shape as ``logits``; True marks a real position. Masked outputs are
    exactly zero; each row of unmasked outputs sums to one.
    """
    logits = _coerce(logits)
    x = logits.data
    m = np.asarray(mask, dtype=bool)
    if x.ndim not in (1, 2):
        raise ValueError("softmax_masked expects a vector or matrix")
    if m.shape != x.shape:
        if m.ndim == 1 and x.ndim == 2 and m.shape[0] == x.shape[1]:
            m = np.broadcast_to(m, x.shape)
        else:
            raise ValueError(f"mask shape {m.shape} incompatible with logits {x.shape}")
    if x.ndim == 1:
        if not m.any():
            raise ValueError("empty attention support")
    elif not m.any(axis=1).all():
        raise ValueError("empty attention support")
    if not np.isfinite(x[m]).all():
        raise ValueError("softmax_masked requires finite logits")

    safe = np.where(m, x, 0.0)
    shifted = safe - np.where(m, x, -np.inf).max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(np.where(m, shifted, 0.0)), 0.0)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return from_op(out, (logits,), backward_fn)


def embedding_lookup(table, ids):
    """Gather rows `ids` from a 2-D table; backward scatter-adds."""
    table = _coerce(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ValueError("embedding_lookup expects a 2-D table")
    out = table.data[ids]

    def backward_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return from_op(out, (table,), backward_fn)


# ---------------------------------------------------------------------------
# backward engine and gradient checking


def backward(root):
    """Populate ``grad`` on all ancestors of a scalar root that require it."""
    if not isinstance(root, Tensor):
        raise TypeError("backward expects a Tensor root")
    if root.size != 1:
        raise ValueError("backward requires a scalar root tensor")

    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.lineage is not None:
            for parent in node.lineage.parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

    flows = {id(root): np.ones(root.data.shape, dtype=root.data.dtype)}
    for node in reversed(topo):
        g = flows.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node.lineage is None:
            continue
        parent_grads = node.lineage.backward(g)
        for parent, pg in zip(node.lineage.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in flows:
                flows[key] = flows[key] + pg
            else:
                flows[key] = pg


def grad_check(f, inputs, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Inputs must be float64 tensors with requires_grad set; relative error
    is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximized
    over every element of every input.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        t.zero_grad()

    out = f(*inputs)
    if out.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise ValueError("grad_check: non-finite function output")
    out.backward()

    max_err = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                f_plus = float(f(*inputs).data)
            flat[i] = orig - step
            with no_grad():
                f_minus = float(f(*inputs).data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("grad_check: non-finite function output")
            numeric[i] = (f_plus - f_minus) / (2.0 * step)
        a = analytic.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        err = np.abs(a - numeric) / denom
        if err.size:
            max_err = max(max_err, float(err.max()))
    return max_err
