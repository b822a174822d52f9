"""Tensor-level reverse-mode differentiation.

Operations on :class:`Tensor` are recorded on the active :class:`Tape` and
replayed backwards by :func:`value_and_grad`. The functional helpers in this
module (``sigmoid``, ``diag_scan``, ...) accept either plain arrays, in which
case they just compute, or tensors, in which case they record. Model forward
passes are written against these helpers so the same code serves inference
and training.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteStateError, UnregisteredPrimitive

STATE_LIMIT = 1e12

_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of the nodes created while it is active."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()

    def backward(self, out: "Tensor", seed=None):
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not isinstance(parent, Tensor):
                    continue
                g = _unbroadcast(g, parent.value.shape)
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


class Tensor:
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self._backward = backward
        self.op = op
        self.grad = None
        if _ACTIVE:
            _ACTIVE[-1].nodes.append(self)

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    T = property(lambda self: transpose(self))

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __len__(self):
        return len(self.value)

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return add(self, neg(o))

    def __rsub__(self, o):
        return add(o, neg(self))

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        if isinstance(o, Tensor):
            return mul(self, reciprocal(o))
        return mul(self, 1.0 / np.asarray(o, dtype=float))

    def __rtruediv__(self, o):
        return mul(o, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, k):
        if k == 2:
            return mul(self, self)
        raise UnregisteredPrimitive(f"power {k} is not a registered primitive")

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return tsum(self, axis) * (1.0 / n)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method == "__call__" and ufunc in _UFUNC_TABLE and not kwargs:
            return _UFUNC_TABLE[ufunc](*inputs)
        raise UnregisteredPrimitive(f"numpy ufunc {ufunc.__name__} on a traced tensor")

    def __array_function__(self, func, types, args, kwargs):
        raise UnregisteredPrimitive(f"numpy function {func.__name__} on a traced tensor")


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def _traced(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    return Tensor(_val(a) + _val(b), (a, b), lambda g: (g, g), "add")


def neg(a):
    if not isinstance(a, Tensor):
        return -np.asarray(a)
    return Tensor(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    av, bv = _val(a), _val(b)
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)

    def back(g):
        return (g * bv if ta else None), (g * av if tb else None)

    return Tensor(av * bv, (a, b), back, "mul")


def reciprocal(a):
    if not isinstance(a, Tensor):
        return 1.0 / np.asarray(a)
    r = 1.0 / a.value
    return Tensor(r, (a,), lambda g: (-g * r * r,), "reciprocal")


def matmul(a, b):
    """``a @ b`` with ``b`` two-dimensional and ``a`` of shape (..., k)."""
    av, bv = _val(a), _val(b)
    if not _traced(a, b):
        return av @ bv
    if bv.ndim != 2:
        raise UnregisteredPrimitive("matmul only records a @ b with 2-D b")

    def back(g):
        ga = g @ bv.T if isinstance(a, Tensor) else None
        gb = None
        if isinstance(b, Tensor):
            if av.ndim == 1:
                gb = np.outer(av, g)
            else:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return Tensor(av @ bv, (a, b), back, "matmul")


def linear(x, w):
    """``x @ w.T`` for x of shape (..., k) and w of shape (n, k)."""
    xv, wv = _val(x), _val(w)
    flat = xv.reshape(-1, xv.shape[-1])
    out = (flat @ wv.T).reshape(xv.shape[:-1] + (wv.shape[0],))
    if not _traced(x, w):
        return out

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ wv).reshape(xv.shape) if isinstance(x, Tensor) else None
        gw = g2.T @ flat if isinstance(w, Tensor) else None
        return gx, gw

    return Tensor(out, (x, w), back, "linear")


def transpose(a):
    if not isinstance(a, Tensor):
        return np.asarray(a).T
    return Tensor(a.value.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape):
    if not isinstance(a, Tensor):
        return np.reshape(a, shape)
    old = a.value.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def getitem(a, idx):
    shape = a.value.shape

    basic = all(isinstance(i, (int, slice, type(Ellipsis)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def back(g):
        out = np.zeros(shape)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.value[idx], (a,), back, "getitem")


def tsum(a, axis=None):
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis)
    shape = a.value.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Tensor(np.sum(a.value, axis=axis), (a,), back, "sum")


def _unary(name, f, df):
    def op(a):
        if not isinstance(a, Tensor):
            return f(np.asarray(a, dtype=np.float64))
        out = f(a.value)
        return Tensor(out, (a,), lambda g: (g * df(a.value, out),), name)

    op.__name__ = name
    return op


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


exp = _unary("exp", np.exp, lambda x, y: y)
tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
sigmoid = _unary("sigmoid", _sigmoid, lambda x, y: y * (1.0 - y))
cos = _unary("cos", np.cos, lambda x, y: -np.sin(x))
sin = _unary("sin", np.sin, lambda x, y: np.cos(x))
log = _unary("log", np.log, lambda x, y: 1.0 / x)


def _divide(a, b):
    if isinstance(b, Tensor):
        return mul(a, reciprocal(b))
    return mul(a, 1.0 / np.asarray(b, dtype=float))


_UFUNC_TABLE = {np.add: add, np.multiply: mul, np.subtract: lambda a, b: add(a, neg(b)),
                np.matmul: matmul, np.negative: neg, np.exp: exp, np.tanh: tanh,
                np.cos: cos, np.sin: sin, np.square: lambda a: mul(a, a),
                np.true_divide: _divide}


def concat(xs, axis=-1):
    if not _traced(*xs):
        return np.concatenate([np.asarray(x) for x in xs], axis=axis)
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(out, tuple(xs), back, "concat")


def stack(xs, axis=1):
    if not _traced(*xs):
        return np.stack([np.asarray(x) for x in xs], axis=axis)
    vals = [_val(x) for x in xs]

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return Tensor(np.stack(vals, axis=axis), tuple(xs), back, "stack")


def zeros_like_state(x, n):
    """Zero state of width ``n`` matching the batch shape of ``x`` (B, T, d)."""
    return np.zeros(_val(x).shape[:-2] + (n,))


def _guard(h, t):
    m = np.max(np.abs(h)) if h.size else 0.0
    if not np.isfinite(m):
        raise NonFiniteStateError("non-finite recurrent state", t)
    if m > STATE_LIMIT:
        raise NonFiniteStateError(f"recurrent state magnitude {m:.3g} exceeds guard", t)


def diag_scan(lam, u):
    """``h_t = lam * h_{t-1} + u_t`` along axis -2 of u (…, T, n), h_0 = 0."""
    lv, uv = _val(lam), _val(u)
    ut = np.ascontiguousarray(np.moveaxis(uv, -2, 0))
    ht = np.empty_like(ut)
    prev = np.zeros_like(ut[0])
    for t in range(ut.shape[0]):
        prev *= lv
        prev += ut[t]
        ht[t] = prev
    h = np.moveaxis(ht, 0, -2)
    _check_trace(h)
    if not _traced(lam, u):
        return h

    def back(g):
        gt = np.ascontiguousarray(np.moveaxis(g, -2, 0))
        at = np.empty_like(gt)
        a = np.zeros_like(gt[0])
        for t in range(gt.shape[0] - 1, -1, -1):
            a *= lv
            a += gt[t]
            at[t] = a
        n = uv.shape[-1]
        glam = np.sum((at[1:] * ht[:-1]).reshape(-1, n), axis=0)
        return glam.reshape(np.shape(lv)), np.moveaxis(at, 0, -2)

    return Tensor(h, (lam, u), back, "diag_scan")


def _check_trace(h):
    """Guard a whole (…, T, n) state trace, naming the first bad step."""
    if h.size == 0:
        return
    top = float(np.max(h))
    bottom = float(np.min(h))
    if np.isfinite(top) and np.isfinite(bottom) and max(top, -bottom) <= STATE_LIMIT:
        return
    peak = np.max(np.abs(h), axis=tuple(i for i in range(h.ndim) if i != h.ndim - 2))
    bad = ~np.isfinite(peak) | (peak > STATE_LIMIT)
    if bad.any():
        t = int(np.argmax(bad))
        _guard(np.atleast_1d(peak[t]), t)


def complex_diag_scan(lam_re, lam_im, u):
    """Complex diagonal recurrence on split storage.

    ``u`` has shape (…, T, 2n) holding real parts then imaginary parts; the
    result uses the same layout. ``h_t = lam * h_{t-1} + u_t`` in complex
    arithmetic with ``lam = lam_re + i lam_im``.
    """
    lr, li, uv = _val(lam_re), _val(lam_im), _val(u)
    n = uv.shape[-1] // 2
    lam = lr + 1j * li
    uc = uv[..., :n] + 1j * uv[..., n:]
    T = uv.shape[-2]
    hc = np.empty_like(uc)
    prev = np.zeros(uc.shape[:-2] + (n,), dtype=complex)
    for t in range(T):
        prev = lam * prev + uc[..., t, :]
        _guard(prev, t)
        hc[..., t, :] = prev
    out = np.concatenate((hc.real, hc.imag), axis=-1)
    if not _traced(lam_re, lam_im, u):
        return out

    def back(g):
        gc = g[..., :n] + 1j * g[..., n:]
        a = np.zeros_like(prev)
        gu = np.empty_like(uc)
        glam = np.zeros(n, dtype=complex)
        conj_lam = np.conj(lam)
        for t in range(T - 1, -1, -1):
            a = gc[..., t, :] + conj_lam * a
            gu[..., t, :] = a
            if t > 0:
                glam += np.sum((a * np.conj(hc[..., t - 1, :])).reshape(-1, n), axis=0)
        gu_split = np.concatenate((gu.real, gu.imag), axis=-1)
        return glam.real.reshape(np.shape(lr)), glam.imag.reshape(np.shape(li)), gu_split

    return Tensor(out, (lam_re, lam_im, u), back, "complex_diag_scan")


def dense_scan(a_rec, u):
    """``h_t = A h_{t-1} + u_t`` with a full recurrence matrix A (n, n)."""
    av, uv = _val(a_rec), _val(u)
    T = uv.shape[-2]
    h = np.empty_like(uv)
    prev = np.zeros(uv.shape[:-2] + uv.shape[-1:])
    for t in range(T):
        prev = prev @ av.T + uv[..., t, :]
        _guard(prev, t)
        h[..., t, :] = prev
    if not _traced(a_rec, u):
        return h

    def back(g):
        n = uv.shape[-1]
        a = np.zeros_like(prev)
        gu = np.empty_like(uv)
        ga = np.zeros((n, n))
        for t in range(T - 1, -1, -1):
            a = g[..., t, :] + a @ av
            gu[..., t, :] = a
            if t > 0:
                ga += a.reshape(-1, n).T @ h[..., t - 1, :].reshape(-1, n)
        return ga, gu

    return Tensor(h, (a_rec, u), back, "dense_scan")


def value_and_grad(loss_fn, params: dict):
    """Evaluate ``loss_fn(traced_params)`` and its gradient.

    ``params`` maps names to arrays; ``loss_fn`` receives the same mapping
    with traced tensors and must return a scalar tensor. Returns
    ``(loss, grads)`` with ``grads`` keyed like ``params``.
    """
    with Tape() as tape:
        leaves = {k: Tensor(np.array(v, dtype=np.float64)) for k, v in params.items()}
        out = loss_fn(leaves)
    if not isinstance(out, Tensor):
        raise UnregisteredPrimitive("loss does not depend on the parameters through the tape")
    if out.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {out.value.shape}")
    tape.backward(out)
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
             for k, t in leaves.items()}
    return float(out.value), grads


def log_softmax(z, axis=-1):
    """Numerically stable log-softmax with its own adjoint."""
    zv = _val(z)
    shifted = zv - np.max(zv, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    if not _traced(z):
        return out

    def back(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return Tensor(out, (z,), back, "log_softmax")
