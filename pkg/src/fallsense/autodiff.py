"""Minimal dense-tensor reverse-mode autodiff over numpy, plus Adam.

Just enough surface for the encoder classifier: broadcasting add/mul,
(batched) matmul, relu, log, masked softmax, layer norm, row selection and
prepending, reductions. Gradients accumulate into .grad via a topological
walk of the recorded graph. dtype follows the input arrays, so the whole
model can run in float64 for finite-difference checking.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteGradient


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._backward is None:  # leaf parameter
                t.grad = g if t.grad is None else t.grad + g
                continue
            for parent, pg in zip(t._parents, t._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return self

    def __repr__(self):
        return f"Tensor{self.data.shape}"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def scale(a, s: float):
    a = as_tensor(a)
    return Tensor(a.data * s, parents=(a,), backward=lambda g: (g * s,))


def matmul(a, b):
    """2-D or batched 3-D @ 2-D / 3-D matmul."""
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            if b.data.ndim == 2:
                ga = g @ b.data.T
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            if a.data.ndim == 2:
                gb = a.data.T @ g
            elif b.data.ndim == 2:
                # (B,L,D) @ (D,E): fold batch into rows
                d = a.data.shape[-1]
                gb = a.data.reshape(-1, d).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
                gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return Tensor(out_data, parents=(a, b), backward=backward)


def relu(a):
    a = as_tensor(a)
    keep = a.data > 0
    return Tensor(a.data * keep, parents=(a,), backward=lambda g: (g * keep,))


def log(a, floor=0.0):
    a = as_tensor(a)
    clipped = np.maximum(a.data, floor) if floor else a.data
    out_data = np.log(clipped)

    def backward(g):
        ga = g / clipped
        if floor:
            ga = np.where(a.data >= floor, ga, 0.0)
        return (ga,)

    return Tensor(out_data, parents=(a,), backward=backward)


def masked_softmax(a, neg_mask=None):
    """Softmax over the last axis; positions where neg_mask is True get
    weight exactly 0 (additive -inf before normalization)."""
    a = as_tensor(a)
    scores = a.data
    if neg_mask is not None:
        scores = np.where(neg_mask, -np.inf, scores)
    m = np.max(scores, axis=-1, keepdims=True)
    e = np.exp(scores - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (y * (g - dot),)

    return Tensor(y, parents=(a,), backward=backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc**2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data
    d = x.data.shape[-1]

    def backward(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = _unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gbeta = _unbroadcast(g, beta.shape)
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * np.mean(gh * xhat, axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return Tensor(out_data, parents=(x, gamma, beta), backward=backward)


def prepend_row(row, x):
    """Broadcast a (D,) row to the front of a (B, L, D) batch -> (B, L+1, D)."""
    row, x = as_tensor(row), as_tensor(x)
    b = x.data.shape[0]
    tile = np.broadcast_to(row.data, (b, 1, row.data.shape[-1]))
    out_data = np.concatenate([tile, x.data], axis=1)

    def backward(g):
        grow = g[:, 0, :].sum(axis=0) if row.requires_grad else None
        return grow, g[:, 1:, :]

    return Tensor(out_data, parents=(row, x), backward=backward)


def first_row(x):
    """(B, L, D) -> (B, D), selecting position 0."""
    x = as_tensor(x)
    out_data = x.data[:, 0, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, 0, :] = g
        return (gx,)

    return Tensor(out_data, parents=(x,), backward=backward)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    return Tensor(x.data.reshape(shape), parents=(x,),
                  backward=lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inverse = np.argsort(axes)
    return Tensor(x.data.transpose(axes), parents=(x,),
                  backward=lambda g: (g.transpose(inverse),))


def mean_all(x):
    x = as_tensor(x)
    n = x.data.size
    return Tensor(np.asarray(x.data.mean()), parents=(x,),
                  backward=lambda g: (np.broadcast_to(g / n, x.data.shape).copy(),))


def sum_all(x):
    x = as_tensor(x)
    return Tensor(np.asarray(x.data.sum()), parents=(x,),
                  backward=lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def dropout(x, p: float, rng):
    """Inverted dropout; rng fixed by the caller keeps training deterministic."""
    if p <= 0.0:
        return as_tensor(x)
    x = as_tensor(x)
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    keep = keep.astype(x.data.dtype)
    return mul(x, Tensor(keep))


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, params: dict, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for {k}")
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1**self.t)
            v_hat = self.v[k] / (1 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
