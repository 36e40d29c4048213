"""Reverse-mode automatic differentiation over dense numpy arrays.

The design is an eager Wengert list: every op executes immediately on numpy
data and, when a tape is active, appends the result node to the tape.  Since
nodes are recorded in creation order, the record is already a topological
order of the DAG and ``backward`` is a single reverse sweep.  Re-using a node
as input to several later ops is fine; its gradient accumulates before the
sweep reaches it.

Storage dtype is whatever the caller puts in (float32 for training, float64
for gradient verification).  Ops never silently upcast on their own; numpy
promotion rules apply when operands are mixed.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class NonScalarLossError(ValueError):
    """Raised when backward() is called on a tensor that is not a scalar."""


class NonFiniteLossError(ValueError):
    """Raised by grad_check when the objective evaluates to NaN or inf."""


class Tensor:
    """A numpy array plus gradient bookkeeping.

    ``grad`` stays None until backward reaches the node.  ``requires_grad``
    marks both trainable leaves and any node downstream of one.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # Arithmetic sugar.  Python scalars go through affine() so no constant
    # nodes pile up on the tape.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return affine(self, 1.0, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return affine(self, 1.0, -float(other))

    def __rsub__(self, other):
        return affine(self, -1.0, float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return affine(self, float(other), 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data, dtype=None):
    """Wrap data as a non-trainable tensor."""
    return Tensor(np.asarray(data, dtype=dtype))


def parameter(data, name=None):
    """Wrap data as a trainable leaf."""
    return Tensor(np.asarray(data), requires_grad=True, name=name)


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Records op outputs in creation order; supports one backward sweep.

    Also carries a free-form ``cache`` dict so callers can share sub-graphs
    (for example, one char encoding per distinct word within a minibatch).
    Cached nodes are valid only for the lifetime of the tape because
    parameter values change between optimizer steps.
    """

    __slots__ = ("_nodes", "cache")

    def __init__(self):
        self._nodes = []
        self.cache = {}

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor):
        if loss.data.shape != ():
            raise NonScalarLossError(
                f"backward() needs a scalar loss, got shape {loss.data.shape}"
            )
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for node in reversed(self._nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def zero_grads(params):
    """Clear gradients on an iterable or dict of tensors."""
    if isinstance(params, dict):
        params = params.values()
    for p in params:
        p.grad = None


def _record(data, backward, track):
    out = Tensor(data)
    if track:
        tape = active_tape()
        if tape is not None:
            out.requires_grad = True
            out._backward = backward
            tape._nodes.append(out)
    return out


def _accum(t: Tensor, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(a.data + b.data, bw, a.requires_grad or b.requires_grad)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(a.data - b.data, bw, a.requires_grad or b.requires_grad)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    _check_broadcast(a, b, "mul")

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(a.data * b.data, bw, a.requires_grad or b.requires_grad)


def affine(t: Tensor, scale: float, shift: float) -> Tensor:
    """scale * t + shift with python-scalar coefficients."""

    def bw(g):
        _accum(t, g * scale if scale != 1.0 else g)

    return _record(t.data * scale + shift, bw, t.requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product for ndim in {1, 2} on either side."""
    da, db = a.data, b.data
    if da.ndim not in (1, 2) or db.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D supported, got {da.shape} @ {db.shape}")
    if da.shape[-1] != (db.shape[0] if db.ndim >= 1 else None):
        raise ShapeError(f"matmul: inner dims differ, {da.shape} @ {db.shape}")

    def bw(g):
        if da.ndim == 2 and db.ndim == 2:
            _accum(a, g @ db.T)
            _accum(b, da.T @ g)
        elif da.ndim == 2 and db.ndim == 1:
            _accum(a, np.outer(g, db))
            _accum(b, da.T @ g)
        elif da.ndim == 1 and db.ndim == 2:
            _accum(a, db @ g)
            _accum(b, np.outer(da, g))
        else:
            _accum(a, g * db)
            _accum(b, g * da)

    return _record(da @ db, bw, a.requires_grad or b.requires_grad)


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[d.shape for d in datas]} on axis {axis}"
        ) from None
    sizes = [d.shape[axis] for d in datas]

    def bw(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accum(t, g[tuple(index)])
            offset += size

    return _record(out, bw, any(t.requires_grad for t in tensors))


def stack_rows(tensors) -> Tensor:
    """Stack same-shaped tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack_rows: need at least one tensor")
    shape0 = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != shape0:
            raise ShapeError(f"stack_rows: shapes {shape0} and {t.data.shape} differ")

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, g[i])

    return _record(
        np.stack([t.data for t in tensors]), bw, any(t.requires_grad for t in tensors)
    )


def reshape(t: Tensor, shape) -> Tensor:
    old = t.data.shape

    def bw(g):
        _accum(t, g.reshape(old))

    return _record(t.data.reshape(shape), bw, t.requires_grad)


def narrow(t: Tensor, key) -> Tensor:
    """Slice view t[key]; key is a tuple of slices (no integer indexing)."""
    if not isinstance(key, tuple) or not all(isinstance(k, slice) for k in key):
        raise ShapeError("narrow: key must be a tuple of slices")
    out = t.data[key].copy()

    def bw(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[key] += g

    return _record(out, bw, t.requires_grad)


def rows(t: Tensor, idx) -> Tensor:
    """Gather rows t[idx] along axis 0; idx is an int sequence."""
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            np.add.at(t.grad, idx, g)

    return _record(t.data[idx], bw, t.requires_grad)


def take_pairs(t: Tensor, row_idx, col_idx) -> Tensor:
    """Gather t[row_idx[i], col_idx[i]] from a 2-D tensor into a vector."""
    if t.data.ndim != 2:
        raise ShapeError(f"take_pairs: expected 2-D tensor, got shape {t.data.shape}")
    row_idx = np.asarray(row_idx, dtype=np.intp)
    col_idx = np.asarray(col_idx, dtype=np.intp)
    if row_idx.shape != col_idx.shape:
        raise ShapeError(
            f"take_pairs: index shapes {row_idx.shape} and {col_idx.shape} differ"
        )

    def bw(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            np.add.at(t.grad, (row_idx, col_idx), g)

    return _record(t.data[row_idx, col_idx], bw, t.requires_grad)


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)

    def bw(g):
        _accum(t, g * (1.0 - out * out))

    return _record(out, bw, t.requires_grad)


def sigmoid(t: Tensor) -> Tensor:
    # Branch on sign to stay stable for large |x|.
    d = t.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)

    def bw(g):
        _accum(t, g * out * (1.0 - out))

    return _record(out, bw, t.requires_grad)


def softmax(t: Tensor, axis=-1) -> Tensor:
    d = t.data
    shifted = d - np.max(d, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        _accum(t, (g - inner) * out)

    return _record(out, bw, t.requires_grad)


def log_sum_exp(t: Tensor, axis=None, keepdims=False) -> Tensor:
    """log(sum(exp(t))) with the max-shift trick for stability."""
    d = t.data
    m = np.max(d, axis=axis, keepdims=True)
    lse = m + np.log(np.sum(np.exp(d - m), axis=axis, keepdims=True))
    out = lse if keepdims else np.squeeze(lse, axis=axis) if axis is not None else lse.reshape(())

    def bw(g):
        soft = np.exp(d - lse)
        g_arr = np.asarray(g)
        if not keepdims:
            if axis is None:
                g_arr = g_arr.reshape((1,) * d.ndim)
            else:
                g_arr = np.expand_dims(g_arr, axis=axis)
        _accum(t, g_arr * soft)

    return _record(out, bw, t.requires_grad)


def tsum(t: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = t.data.shape

    def bw(g):
        g_arr = np.asarray(g)
        if not keepdims and axis is not None:
            g_arr = np.expand_dims(g_arr, axis=axis)
        _accum(t, np.broadcast_to(g_arr, shape))

    return _record(np.sum(t.data, axis=axis, keepdims=keepdims), bw, t.requires_grad)


def grad_check(fn, params, h=1e-5, sample=None, rng=None):
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` is a no-argument callable returning a scalar Tensor; it must
    re-run the full forward pass each call (parameter data is perturbed in
    place between calls).  ``params`` maps names to leaf tensors.  With
    ``sample`` set, at most that many coordinates per parameter are probed,
    chosen by ``rng``.  Returns (max relative error, per-parameter dict).

    The error metric is |analytic - numeric| / max(1, |analytic|, |numeric|),
    which behaves like an absolute tolerance for tiny gradients and a
    relative one for large gradients.
    """
    if isinstance(params, dict):
        named = list(params.items())
    else:
        named = [(p.name or f"param{i}", p) for i, p in enumerate(params)]

    with Tape() as tape:
        loss = fn()
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"objective is not finite: {value}")
    zero_grads(p for _, p in named)
    tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in named
    }

    worst = 0.0
    per_param = {}
    for name, p in named:
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is not None and n > sample:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = np.sort(rng.choice(n, size=sample, replace=False))
        else:
            coords = range(n)
        ana_flat = analytic[name].reshape(-1)
        local = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteLossError(
                    f"objective not finite while probing {name}[{i}]"
                )
            numeric = (f_plus - f_minus) / (2.0 * h)
            ana = float(ana_flat[i])
            err = abs(ana - numeric) / max(1.0, abs(ana), abs(numeric))
            local = max(local, err)
        per_param[name] = local
        worst = max(worst, local)
    return worst, per_param
