"""Minimal dense-tensor substrate with reverse-mode gradients.

Everything is float64 numpy under the hood. Each operation validates its
operand shapes, computes the forward value eagerly and records a backward
closure; calling ``backward()`` on a scalar result walks the recorded graph
in reverse topological order and accumulates gradients into every tensor it
reaches. Leaf tensors meant to be optimized are ``Parameter`` instances.

Deliberately not supported: general broadcasting (scalars against anything
is the only exception), GPU execution, operator fusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CheckError, ConfigError, NumericError, ShapeError


class Tensor:
    """Dense float64 array plus the bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "_parents", "_bwd")

    def __init__(self, data, _parents=(), _bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._bwd = _bwd

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    # -- backward pass ---------------------------------------------------
    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)


class Parameter(Tensor):
    """Leaf tensor updated by the optimizer; keeps a name for checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(data)
        self.name = name

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accum(t, g):
    # copy on first write: g may alias the child's grad buffer
    t.grad = np.array(g, dtype=np.float64) if t.grad is None else t.grad + g


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def _is_scalar(t):
    return t.data.size == 1 and t.data.ndim == 0


# -- arithmetic ----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if not (_is_scalar(a) or _is_scalar(b)):
        _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, g.sum() if _is_scalar(a) else g)
        _accum(b, g.sum() if _is_scalar(b) else g)

    out._bwd = bwd
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if not (_is_scalar(a) or _is_scalar(b)):
        _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        _accum(a, g.sum() if _is_scalar(a) else g)
        _accum(b, -g.sum() if _is_scalar(b) else -g)

    out._bwd = bwd
    return out


def neg(a):
    a = as_tensor(a)
    out = Tensor(-a.data, (a,))
    out._bwd = lambda g: _accum(a, -g)
    return out


def mul(a, b):
    """Elementwise product; one side may be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if not (_is_scalar(a) or _is_scalar(b)):
        _check_same_shape("mul", a, b)
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        ga = g * b.data
        gb = g * a.data
        _accum(a, ga.sum() if _is_scalar(a) else ga)
        _accum(b, gb.sum() if _is_scalar(b) else gb)

    out._bwd = bwd
    return out


def matmul(a, b):
    """1-d/2-d matrix product following numpy semantics."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-d/2-d operands, got {a.shape} @ {b.shape}")
    try:
        value = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}: {exc}") from None
    out = Tensor(value, (a, b))
    na, nb = a.data.ndim, b.data.ndim

    def bwd(g):
        if na == 2 and nb == 2:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        elif na == 2 and nb == 1:
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
        elif na == 1 and nb == 2:
            _accum(a, b.data @ g)
            _accum(b, np.outer(a.data, g))
        else:  # dot product
            _accum(a, g * b.data)
            _accum(b, g * a.data)

    out._bwd = bwd
    return out


def tensor_sum(a, axis=None):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis), (a,))

    def bwd(g):
        if axis is None:
            _accum(a, np.full_like(a.data, float(g)))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    out._bwd = bwd
    return out


def dot(a, b):
    """Inner product of two 1-d tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"dot: needs 1-d operands, got {a.shape} and {b.shape}")
    _check_same_shape("dot", a, b)
    return matmul(a, b)


def stack(tensors):
    """Stack 0-d tensors into a vector, or equal-length vectors into a matrix."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack: empty input")
    ndim = tensors[0].data.ndim
    for t in tensors:
        if t.data.ndim != ndim or t.shape != tensors[0].shape:
            raise ShapeError("stack: inputs must share one shape")
    out = Tensor(np.stack([t.data for t in tensors]), tuple(tensors))

    def bwd(g):
        for i, t in enumerate(tensors):
            _accum(t, g[i])

    out._bwd = bwd
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]

    def bwd(g):
        start = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            _accum(t, g[tuple(sl)])
            start += n

    out._bwd = bwd
    return out


def take(a, idx):
    """Basic/fancy indexing with scatter-add backward."""
    a = as_tensor(a)
    out = Tensor(a.data[idx], (a,))

    def bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    out._bwd = bwd
    return out


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: needs a 2-d tensor, got {a.shape}")
    out = Tensor(a.data.T, (a,))
    out._bwd = lambda g: _accum(a, g.T)
    return out


def outer_add(u, v):
    """Matrix M[j, k] = u[j] + v[k] from two vectors."""
    u, v = as_tensor(u), as_tensor(v)
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ShapeError(f"outer_add: needs 1-d operands, got {u.shape} and {v.shape}")
    out = Tensor(u.data[:, None] + v.data[None, :], (u, v))

    def bwd(g):
        _accum(u, g.sum(axis=1))
        _accum(v, g.sum(axis=0))

    out._bwd = bwd
    return out


# -- nonlinearities -------------------------------------------------------


def exp(a):
    a = as_tensor(a)
    out = Tensor(np.exp(a.data), (a,))
    out._bwd = lambda g: _accum(a, g * out.data)
    return out


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.data), (a,))
    out._bwd = lambda g: _accum(a, g / a.data)
    return out


def tanh(a):
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data), (a,))
    out._bwd = lambda g: _accum(a, g * (1.0 - out.data * out.data))
    return out


def sigmoid(a):
    a = as_tensor(a)
    # stable on both tails
    value = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                     np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    out = Tensor(value, (a,))
    out._bwd = lambda g: _accum(a, g * out.data * (1.0 - out.data))
    return out


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))
    out._bwd = lambda g: _accum(a, g * (a.data > 0))
    return out


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    out = Tensor(np.where(a.data > 0, a.data, slope * a.data), (a,))
    out._bwd = lambda g: _accum(a, g * np.where(a.data > 0, 1.0, slope))
    return out


def clip(a, lo, hi):
    """Clamp values; gradient passes through only in the interior."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi), (a,))
    inside = (a.data > lo) & (a.data < hi)
    out._bwd = lambda g: _accum(a, g * inside)
    return out


def softmax(a, axis=-1):
    """Shift-invariant softmax along one axis."""
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax: non-finite input")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, (a,))

    def bwd(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        _accum(a, s * (g - inner))

    out._bwd = bwd
    return out


def masked_softmax(a, mask):
    """Row-wise softmax of a 2-d tensor over True positions of ``mask``.

    Masked-out positions get exactly 0; every row must keep at least one
    admissible position.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if a.data.ndim != 2 or mask.shape != a.shape:
        raise ShapeError(f"masked_softmax: logits {a.shape} vs mask {mask.shape}")
    if not mask.any(axis=1).all():
        raise ShapeError("masked_softmax: a row has no admissible position")
    if not np.all(np.isfinite(a.data[mask])):
        raise NumericError("masked_softmax: non-finite input")
    neg = np.where(mask, a.data, -np.inf)
    shifted = neg - neg.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, (a,))

    def bwd(g):
        inner = (g * s).sum(axis=1, keepdims=True)
        _accum(a, s * (g - inner))

    out._bwd = bwd
    return out


def embedding_sum(table, indices):
    """Sum of the selected columns of a (dim x vocab) table; empty -> zeros."""
    table = as_tensor(table)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_sum: table must be 2-d, got {table.shape}")
    idx = list(indices)
    if not idx:
        return Tensor(np.zeros(table.shape[0]))
    value = table.data[:, idx].sum(axis=1)
    out = Tensor(value, (table,))

    def bwd(g):
        buf = np.zeros_like(table.data)
        for k in idx:
            buf[:, k] += g
        _accum(table, buf)

    out._bwd = bwd
    return out


def dropout(a, rate, training, rng=None):
    """Inverted dropout: scale survivors by 1/(1-rate); identity at inference."""
    if rate < 0 or rate >= 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    if rng is None:
        rng = np.random.default_rng()
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    keep = rng.random(a.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = Tensor(a.data * keep * scale, (a,))
    out._bwd = lambda g: _accum(a, g * keep * scale)
    return out


# -- gradient checking -----------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference comparison."""

    max_rel_error: float
    tol: float
    worst_param: str = ""
    worst_index: tuple = ()
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def grad_check(fn, params, tol=1e-4, h_rel=1e-5):
    """Compare backward() gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph from scratch on every call and return a
    scalar Tensor; ``params`` are the Parameters it reads. Relative error per
    entry is |ga - gn| / max(1, |ga|, |gn|); the report carries the maximum.
    """
    params = list(params)

    def evaluate():
        out = fn()
        v = float(out.data)
        if not np.isfinite(v):
            raise CheckError("grad_check: function evaluated non-finite")
        return out

    for p in params:
        p.grad = None
    out = evaluate()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    report = GradCheckReport(max_rel_error=0.0, tol=tol)
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            x0 = flat[i]
            h = h_rel * max(1.0, abs(x0))
            flat[i] = x0 + h
            f_plus = float(evaluate().data)
            flat[i] = x0 - h
            f_minus = float(evaluate().data)
            flat[i] = x0
            gn = (f_plus - f_minus) / (2.0 * h)
            err = abs(gflat[i] - gn) / max(1.0, abs(gflat[i]), abs(gn))
            if err > report.max_rel_error:
                report.max_rel_error = err
                report.worst_param = getattr(p, "name", "<tensor>")
                report.worst_index = np.unravel_index(i, p.data.shape)
            if err > tol:
                report.failures.append((getattr(p, "name", "<tensor>"), i, err))
    return report
