"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable op builds a node holding its parents and a closure
mapping the output gradient to one gradient per parent. ``backward`` walks
the graph in reverse topological order and accumulates into leaf ``grad``
arrays (add-into; call ``zero_grad`` to reset).
"""
from __future__ import annotations

import contextlib
import hashlib
import math

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

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
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(data, requires_grad=True)


def _node(data, parents, backward_fn, op):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss):
    """Populate ``grad`` on every leaf reachable from the scalar ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg


# elementwise and structural ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.data + b.data, (a, b), bw, "add")


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return _node(ad / bd, (a, b), bw, "div")


def matmul(a, b):
    """Batched matrix product over the last two axes (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _node(ad @ bd, (a, b), bw, "matmul")


def project_heads(x, w):
    """Per-head projection: x (..., T, d) with w (H, d, dk) -> (..., H, T, dk).

    Equivalent to ``matmul(x[..., None, :, :], w)`` but done as one (d, H*dk) product.
    """
    heads, d, dk = w.shape
    if x.shape[-1] != d:
        raise ShapeError(f"head projection mismatch: x {x.shape}, W {w.shape}")
    xd = x.data
    wf = np.transpose(w.data, (1, 0, 2)).reshape(d, heads * dk)
    y = (xd @ wf).reshape(xd.shape[:-1] + (heads, dk))
    out = np.ascontiguousarray(np.moveaxis(y, -2, -3))

    def bw(g):
        g2 = np.moveaxis(g, -3, -2).reshape(xd.shape[:-1] + (heads * dk,))
        gx = g2 @ wf.T
        gw = xd.reshape(-1, d).T @ g2.reshape(-1, heads * dk)
        return gx, np.transpose(gw.reshape(d, heads, dk), (1, 0, 2))

    return _node(out, (x, w), bw, "project_heads")


def transpose(a, axes=None):
    """Swap the last two axes, or permute by ``axes``."""
    if axes is None:
        if a.ndim < 2:
            raise ShapeError(f"transpose needs rank >= 2, got {a.shape}")
        out = np.swapaxes(a.data, -1, -2)
        return _node(out, (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")
    inv = np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a, shape):
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw, "stack")


def getitem(a, idx):
    shape = a.shape

    def bw(g):
        z = np.zeros(shape, dtype=DTYPE)
        np.add.at(z, idx, g)
        return (z,)

    return _node(a.data[idx], (a,), bw, "getitem")


def embedding(table, ids):
    """Row lookup ``table[ids]``; gradients scatter-add back into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ShapeError(f"embedding id out of range [0, {n})")
    shape = table.shape

    def bw(g):
        z = np.zeros(shape, dtype=DTYPE)
        np.add.at(z, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (z,)

    return _node(table.data[ids], (table,), bw, "embedding")


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def relu(x):
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x):
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(x):
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def softmax(x, axis=-1):
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    if x.shape[axis] == 0:
        raise ShapeError(f"softmax over empty axis {axis} of shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), bw, "softmax")


def masked_fill(x, allowed, value=-np.inf):
    """Replace entries where ``allowed`` is False by ``value``; no gradient flows there."""
    allowed = np.asarray(allowed, dtype=bool)
    out = np.where(allowed, x.data, value)
    return _node(out, (x,), lambda g: (_unbroadcast(g * allowed, x.shape),), "masked_fill")


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias {gain.shape}/{bias.shape} vs last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def linear(x, w, b=None):
    """Affine map ``x @ w + b`` with ``w`` of shape (d_in, d_out)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear shape mismatch: x {x.shape}, W {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear bias {b.shape} vs output width {w.shape[1]}")
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        out = out + b.data

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bw, "linear")


def cross_entropy(logits, targets, pad_id):
    """Mean negative log-likelihood over positions whose target is not ``pad_id``."""
    v = logits.shape[-1]
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    flat = logits.data.reshape(-1, v)
    if t.shape[0] != flat.shape[0]:
        raise ShapeError(f"{t.shape[0]} targets for {flat.shape[0]} logit rows")
    valid = t != pad_id
    n = int(valid.sum())
    if n == 0:
        raise DegenerateInputError("cross_entropy: every position is padding")
    if t[valid].max() >= v or t[valid].min() < 0:
        raise ShapeError(f"target id out of range for vocabulary of {v}")
    z = flat - flat.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.nonzero(valid)[0]
    nll = lse[rows] - z[rows, t[rows]]
    loss = nll.sum() / n
    shape = logits.shape

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, t[rows]] -= 1.0
        p *= valid[:, None] * (float(g) / n)
        return (p.reshape(shape),)

    return _node(np.asarray(loss), (logits,), bw, "cross_entropy")


# randomness


class Rng:
    """Seeded generator; ``child(label)`` derives an independent labeled sub-stream."""

    def __init__(self, seed):
        self.seed = int(seed) % (1 << 64)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, label):
        h = hashlib.sha256(f"{self.seed}/{label}".encode()).digest()
        return Rng(int.from_bytes(h[:8], "little"))

    def random(self, shape=None):
        return self._gen.random(shape)

    def uniform(self, low, high, shape=None):
        return self._gen.uniform(low, high, shape)

    def normal(self, shape=None, scale=1.0):
        return self._gen.normal(0.0, scale, shape)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n):
        return int(self._gen.integers(n))


def dropout(x, p, training, rng):
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def xavier_init(shape, rng):
    """Glorot-uniform parameter. The last two axes are (fan_in, fan_out)."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("xavier_init needs rank >= 1")
    if any(s <= 0 for s in shape):
        raise ShapeError(f"xavier_init got a zero dimension: {shape}")
    fan_in = shape[-2] if len(shape) >= 2 else shape[0]
    fan_out = shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-bound, bound, shape))


# finite-difference checking


def numerical_grad(f, t, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``t``."""
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f().item()
        flat[i] = old - h
        down = f().item()
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def relative_error(a, b):
    a = np.asarray(a, dtype=DTYPE).reshape(-1)
    b = np.asarray(b, dtype=DTYPE).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(f, inputs, h=1e-5):
    """Largest relative error between analytic and numeric gradients over ``inputs``."""
    for t in inputs:
        t.zero_grad()
    f().backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, relative_error(analytic, numerical_grad(f, t, h)))
    return worst


def directional_check(f, params, rng, h=1e-5):
    """Compare <grad, v> with a central difference along a random unit direction ``v``.

    One forward pair covers every parameter at once, so this scales to whole models.
    """
    for p in params:
        p.zero_grad()
    f().backward()
    dirs = [rng.normal(p.shape) for p in params]
    norm = math.sqrt(sum(float((d * d).sum()) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(float((p.grad * d).sum()) for p, d in zip(params, dirs) if p.grad is not None)
    for p, d in zip(params, dirs):
        p.data += h * d
    up = f().item()
    for p, d in zip(params, dirs):
        p.data -= 2 * h * d
    down = f().item()
    for p, d in zip(params, dirs):
        p.data += h * d
    numeric = (up - down) / (2 * h)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
