"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Everything is float64. A dynamic tape records operations in execution
order; `backward` replays it in reverse and returns a gradient map for
every grad-enabled leaf. Only scalar-with-tensor and equal-shape
broadcasting are supported by the elementwise ops; anything fancier
(bias expansion, attention pooling) goes through explicit shape ops so
every gradient rule stays trivially checkable.
"""

from __future__ import annotations

import numpy as np


class TensorError(Exception):
    pass


class ShapeError(TensorError):
    pass


class DomainError(TensorError):
    pass


class Tensor:
    __slots__ = ("data", "grad_enabled", "name")

    def __init__(self, data, grad_enabled=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad_enabled = bool(grad_enabled)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def copy(self):
        return Tensor(self.data.copy(), grad_enabled=self.grad_enabled, name=self.name)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"<{tag} shape={self.shape} grad={self.grad_enabled}>"

    # hash/eq by identity (default) so tensors can key gradient maps

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class ComputationTape:
    """Ordered record of operations; inputs of each op precede it."""

    def __init__(self):
        self.entries = []        # (out, [(inp, grad_fn), ...])
        self._tracked = set()    # ids of tensors requiring grad (leaves + produced)
        self._produced = set()   # ids of tensors produced by a recorded op
        self._leaves = {}        # id -> leaf Tensor

    def _relevant(self, t):
        return t.grad_enabled or id(t) in self._produced

    def record(self, out, pairs):
        live = []
        for inp, fn in pairs:
            if self._relevant(inp):
                live.append((inp, fn))
                if inp.grad_enabled and id(inp) not in self._produced:
                    self._leaves[id(inp)] = inp
        if not live:
            return
        self.entries.append((out, live))
        self._produced.add(id(out))

    def __enter__(self):
        push_tape(self)
        return self

    def __exit__(self, *exc):
        pop_tape(self)
        return False


_TAPE_STACK = []
_PAUSED = object()


def push_tape(tape):
    _TAPE_STACK.append(tape)


def pop_tape(tape):
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise TensorError("tape stack corrupted")
    _TAPE_STACK.pop()


def active_tape():
    if not _TAPE_STACK:
        return None
    top = _TAPE_STACK[-1]
    return None if top is _PAUSED else top


class paused:
    """Context manager suspending tape recording (e.g. frozen-teacher math)."""

    def __enter__(self):
        _TAPE_STACK.append(_PAUSED)
        return self

    def __exit__(self, *exc):
        if not _TAPE_STACK or _TAPE_STACK[-1] is not _PAUSED:
            raise TensorError("tape stack corrupted")
        _TAPE_STACK.pop()
        return False


def _record(out, pairs):
    tape = active_tape()
    if tape is not None:
        tape.record(out, pairs)
    return out


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise TensorError(f"non-finite values produced by {op}")
    return arr


def _as_scalar(x):
    if isinstance(x, (int, float)):
        return float(x)
    return None


# ---------------------------------------------------------------------------
# elementwise ops

def _binary_prep(a, b, op):
    """Resolve scalar-with-tensor or equal-shape operands."""
    sa, sb = _as_scalar(a), _as_scalar(b)
    if sa is not None:
        a = Tensor(np.full((), sa))
    if sb is not None:
        b = Tensor(np.full((), sb))
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} "
                         "(only scalar or equal-shape broadcasting)")
    return a, b


def _unbroadcast(g, shape):
    if shape == ():
        return np.sum(g)
    return g


def add(a, b):
    a, b = _binary_prep(a, b, "add")
    out = Tensor(_check_finite(a.data + b.data, "add"))
    return _record(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                         (b, lambda g: _unbroadcast(g, b.shape))])


def sub(a, b):
    a, b = _binary_prep(a, b, "sub")
    out = Tensor(_check_finite(a.data - b.data, "sub"))
    return _record(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                         (b, lambda g: _unbroadcast(-g, b.shape))])


def mul(a, b):
    a, b = _binary_prep(a, b, "mul")
    out = Tensor(_check_finite(a.data * b.data, "mul"))
    return _record(out, [(a, lambda g: _unbroadcast(g * b.data, a.shape)),
                         (b, lambda g: _unbroadcast(g * a.data, b.shape))])


def tanh(a):
    out = Tensor(np.tanh(a.data))
    t = out.data
    return _record(out, [(a, lambda g: g * (1.0 - t * t))])


def sigmoid(a):
    # stable two-branch form; never exponentiates a large positive value
    x = a.data
    pos = x >= 0
    s = np.empty_like(x)
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)
    return _record(out, [(a, lambda g: g * s * (1.0 - s))])


def exp(a):
    with np.errstate(over="raise"):
        try:
            e = np.exp(a.data)
        except FloatingPointError:
            raise TensorError("exp overflow")
    out = Tensor(_check_finite(e, "exp"))
    return _record(out, [(a, lambda g: g * e)])


def log(a):
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    out = Tensor(np.log(a.data))
    x = a.data
    return _record(out, [(a, lambda g: g / x)])


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul,
                "tanh": tanh, "sigmoid": sigmoid, "exp": exp, "log": log}


def elementwise(op, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise TensorError(f"unknown elementwise op {op!r}")
    return fn(*args)


# ---------------------------------------------------------------------------
# linear algebra and shape ops

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor(_check_finite(a.data @ b.data, "matmul"))
    return _record(out, [(a, lambda g: g @ b.data.T),
                         (b, lambda g: a.data.T @ g)])


def gather_rows(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"gather_rows: ids must be 1-D, got shape {ids.shape}")
    V = table.shape[0]
    bad = ids[(ids < 0) | (ids >= V)]
    if bad.size:
        raise IndexError(f"gather_rows: id {int(bad[0])} out of range for table with {V} rows")
    out = Tensor(table.data[ids])

    def grad(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return gt

    return _record(out, [(table, grad)])


def pick(a, ids):
    """Select one entry per row of a 2-D tensor: out[i] = a[i, ids[i]]."""
    ids = np.asarray(ids, dtype=np.int64)
    if a.data.ndim != 2 or ids.ndim != 1 or ids.shape[0] != a.shape[0]:
        raise ShapeError(f"pick: incompatible shapes {a.shape} and {ids.shape}")
    rows = np.arange(a.shape[0])
    out = Tensor(a.data[rows, ids])

    def grad(g):
        ga = np.zeros_like(a.data)
        ga[rows, ids] = g
        return ga

    return _record(out, [(a, grad)])


def reshape(a, shape):
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape))
    old = a.shape
    return _record(out, [(a, lambda g: g.reshape(old))])


def concat(tensors, axis=-1):
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    pairs = []
    for i, t in enumerate(tensors):
        lo, hi = offsets[i], offsets[i + 1]

        def grad(g, lo=lo, hi=hi):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        pairs.append((t, grad))
    return _record(out, pairs)


def stack(tensors, axis=1):
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))
    pairs = []
    for i, t in enumerate(tensors):
        def grad(g, i=i):
            return np.take(g, i, axis=axis)
        pairs.append((t, grad))
    return _record(out, pairs)


def expand(a, axis, n):
    """Tile a size-1 axis to size n; gradient sums back over that axis."""
    if a.shape[axis] != 1:
        raise ShapeError(f"expand: axis {axis} of {a.shape} is not size 1")
    reps = [1] * a.data.ndim
    reps[axis] = n
    out = Tensor(np.tile(a.data, reps))
    return _record(out, [(a, lambda g: np.sum(g, axis=axis, keepdims=True))])


def tsum(a, axis=None, keepdims=False):
    out = Tensor(np.sum(a.data, axis=axis, keepdims=keepdims))
    shape = a.shape

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, shape).copy()

    return _record(out, [(a, grad)])


def softmax(a):
    """Softmax over the last axis, max-subtracted for stability."""
    if a.data.ndim == 0 or a.shape[-1] == 0:
        raise ShapeError("softmax: needs a non-empty last axis")
    x = a.data
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    s = e / np.sum(e, axis=-1, keepdims=True)
    out = Tensor(s)

    def grad(g):
        return s * (g - np.sum(g * s, axis=-1, keepdims=True))

    return _record(out, [(a, grad)])


def log_softmax(a):
    """Fused log(softmax(x)) over the last axis."""
    if a.data.ndim == 0 or a.shape[-1] == 0:
        raise ShapeError("log_softmax: needs a non-empty last axis")
    x = a.data
    m = np.max(x, axis=-1, keepdims=True)
    z = x - m
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    out = Tensor(z - lse)
    s = np.exp(out.data)

    def grad(g):
        return g - s * np.sum(g, axis=-1, keepdims=True)

    return _record(out, [(a, grad)])


# ---------------------------------------------------------------------------
# backward pass

def backward(loss, tape):
    """Reverse-accumulate d(loss)/d(leaf) for every grad-enabled leaf.

    Repeated calls over the same tape recompute from scratch and return
    identical gradients (that is the chosen double-backward contract).
    """
    if loss.data.size != 1:
        raise TensorError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for out, pairs in reversed(tape.entries):
        g = grads.get(id(out))
        if g is None:
            continue
        for inp, fn in pairs:
            contrib = fn(g)
            prev = grads.get(id(inp))
            if prev is None:
                grads[id(inp)] = np.array(contrib, dtype=np.float64, copy=True)
            else:
                prev += contrib
    result = {}
    for tid, leaf in tape._leaves.items():
        g = grads.get(tid)
        if g is None:
            g = np.zeros_like(leaf.data)
        result[leaf] = Tensor(g)
    return result


def finite_difference_check(f, params, eps=1e-5):
    """Max relative error between analytic gradients of f and central differences.

    f maps the given list of grad-enabled Tensors to a scalar Tensor and
    must be deterministic.
    """
    with ComputationTape() as tape:
        loss = f(params)
    grads = backward(loss, tape)
    worst = 0.0
    for p in params:
        analytic = grads[p].data if p in grads else np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f(params).data)
            flat[i] = orig - eps
            down = float(f(params).data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic.ravel()[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
