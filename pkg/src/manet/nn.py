"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation on a :class:`Tensor` that depends on a :class:`Parameter`
records a closure computing the vector-Jacobian product for its inputs.
:func:`backward` walks that tape once in reverse topological order and
accumulates gradients into the reachable parameters; the tape is released
afterwards.
"""
from __future__ import annotations

import contextlib
import copy
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError, VerificationError

LEAKY_SLOPE = 0.01

_grad_enabled = True
_uids = itertools.count()


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the tape (targets, acting, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "_parents", "_backward", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = parents
        self._backward = backward
        self.requires_grad = bool(parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None):
        return mean(self, axis)


class Parameter(Tensor):
    """A trainable leaf tensor with a gradient buffer of identical shape."""

    __slots__ = ("grad", "uid", "name")

    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=np.float64, order="C", copy=True))
        self.requires_grad = True
        self.grad = np.zeros_like(self.data)
        self.uid = next(_uids)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"

    def __deepcopy__(self, memo):
        clone = Parameter(self.data, self.name)
        clone.grad[...] = self.grad
        memo[id(self)] = clone
        return clone


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, parents, backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise --------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw)


def square(x):
    x = as_tensor(x)
    return _node(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,))


def absolute(x):
    x = as_tensor(x)
    return _node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def xlogx(x):
    """Elementwise x*log(x) with the 0*log(0) = 0 convention."""
    x = as_tensor(x)
    pos = x.data > 0
    safe = np.where(pos, x.data, 1.0)
    logs = np.log(safe)
    y = np.where(pos, x.data * logs, 0.0)
    return _node(y, (x,), lambda g: (np.where(pos, g * (logs + 1.0), 0.0),))


def leaky_relu(x, slope=LEAKY_SLOPE):
    x = as_tensor(x)
    # max(x, slope*x) equals the piecewise form exactly for 0 <= slope < 1
    y = np.maximum(x.data, slope * x.data)

    def bw(g):
        return (np.where(x.data < 0, g * slope, g),)

    return _node(y, (x,), bw)


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), bw)


# -- linear algebra and shape ---------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ConfigError("matmul operands must be at least 2-d")
    if a.shape[-1] != b.shape[-2]:
        raise ConfigError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    if b.ndim == 2 and a.ndim > 2:
        lead = a.shape[:-1]
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(*lead, b.shape[-1])

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _node(out, (a, b), bw)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(np.matmul(a.data, b.data), (a, b), bw)


def reshape(x, shape):
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def swap_last(x):
    axes = list(range(as_tensor(x).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def tensor_sum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tensor_sum(x, axis), 1.0 / n)


def take(x, index, axis):
    """``x`` indexed with the integer ``index`` along ``axis`` (axis removed)."""
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        np.moveaxis(full, axis, 0)[index] = g
        return (full,)

    return _node(np.take(x.data, index, axis=axis), (x,), bw)


class RowGroups:
    """Grouping of the rows of a 2-d array into identical-row classes."""

    __slots__ = ("first", "inverse", "order", "starts")

    def __init__(self, first, inverse):
        self.first = first
        self.inverse = inverse
        self.order = np.argsort(inverse, kind="stable")
        self.starts = np.searchsorted(inverse[self.order], np.arange(len(first)))


_HASH_CACHE = {}


def dedupe_rows(x2):
    """Return (unique rows, RowGroups) for a 2-d float array; exact."""
    x2 = np.ascontiguousarray(x2, dtype=np.float64)
    width = x2.shape[1]
    proj = _HASH_CACHE.get(width)
    if proj is None:
        proj = _HASH_CACHE[width] = np.random.default_rng(width).standard_normal(width)
    _, first, inverse = np.unique(x2 @ proj, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if not np.array_equal(x2[first][inverse], x2):
        rows = x2.view(np.dtype((np.void, x2.itemsize * width)))[:, 0]
        _, first, inverse = np.unique(rows, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
    return x2[first], RowGroups(first, inverse)


def gather_rows(x, groups):
    """Expand per-group rows back to one row per original element."""
    x = as_tensor(x)

    def bw(g):
        return (np.add.reduceat(g[groups.order], groups.starts, axis=0),)

    return _node(x.data[groups.inverse], (x,), bw)


def row_slice(x, start, stop=None):
    """Rows ``start:stop`` of a 2-d tensor (e.g. one block of a weight matrix)."""
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return _node(x.data[start:stop], (x,), bw)


def pick(x, index):
    """Select ``x[..., index[...]]`` along the last axis (e.g. Q(s, a))."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)[..., 0]

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return _node(out, (x,), bw)


# -- differentiation ----------------------------------------------------------

def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(param) into every reachable Parameter's ``grad``."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise UsageError("backward() requires a scalar loss tensor")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in order:
        if not isinstance(node, Parameter):
            node._parents = ()
            node._backward = None


# -- layers -------------------------------------------------------------------

def mlp_forward(x, layers):
    """Apply ``[(W, b, activation), ...]`` to the last axis of ``x``.

    ``W`` has shape (fan_in, fan_out); activation is ``"leaky_relu"`` or
    ``"identity"``.
    """
    h = as_tensor(x)
    for i, (w, b, activation) in enumerate(layers):
        if h.shape[-1] != w.shape[0]:
            raise ConfigError(
                f"layer {i}: input width {h.shape[-1]} does not match weights {w.shape}"
            )
        h = matmul(h, w) if h.ndim >= 2 else reshape(matmul(reshape(h, (1, -1)), w), (-1,))
        if b is not None:
            h = add(h, b)
        if activation == "leaky_relu":
            h = leaky_relu(h)
        elif activation != "identity":
            raise ConfigError(f"layer {i}: unknown activation {activation!r}")
    return h


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """Container of named parameters shared by every network in the package."""

    model_id = "model"

    def __init__(self):
        self.params: dict[str, Parameter] = {}

    def add_param(self, name, value):
        if name in self.params:
            raise ConfigError(f"duplicate parameter {name!r}")
        p = Parameter(value, name)
        self.params[name] = p
        return p

    def add_dense(self, rng, prefix, fan_in, fan_out, bias=True):
        w = self.add_param(f"{prefix}.W", uniform_init(rng, fan_in, (fan_in, fan_out)))
        b = self.add_param(f"{prefix}.b", uniform_init(rng, fan_in, (fan_out,))) if bias else None
        return w, b

    def add_mlp(self, rng, prefix, widths, final_activation="leaky_relu"):
        layers = []
        for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            w, b = self.add_dense(rng, f"{prefix}{i}", fi, fo)
            last = i == len(widths) - 2
            layers.append((w, b, final_activation if last else "leaky_relu"))
        return layers

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def clone(self):
        return copy.deepcopy(self)

    def regularization(self, aux, config):
        return None


# -- optimisation -------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _named(parameters):
    if isinstance(parameters, dict):
        return list(parameters.items())
    return [(p.name, p) for p in parameters]


def adam_step(parameters, state: AdamState):
    """One bias-corrected Adam update, in place. Gradients are left untouched."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in _named(parameters):
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return parameters


# -- verification -------------------------------------------------------------

def gradient_check(forward, parameters, epsilon=1e-5, max_entries=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``forward`` is a zero-argument callable returning a scalar Tensor. The
    error per entry is ``|analytic - numeric| / max(1, |numeric|)``. With
    ``max_entries`` only that many randomly chosen entries per parameter are
    perturbed.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = [p for _, p in _named(parameters)]
    with no_grad():
        first = forward().data.copy()
        second = forward().data.copy()
    if not np.array_equal(first, second):
        raise VerificationError("forward is not deterministic")

    for p in params:
        p.zero_grad()
    backward(forward())
    worst = 0.0
    for p in params:
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):
            raise VerificationError(f"parameter {p.name!r} is not contiguous")
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in entries:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + epsilon
                plus = float(forward().data)
                flat[i] = orig - epsilon
                minus = float(forward().data)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * epsilon)
            worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(numeric)))
    return worst
