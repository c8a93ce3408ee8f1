"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the detectors in this package: broadcasting
elementwise ops, (batched) matmul, softmax, concatenation, slicing, and the
reductions used by MSE losses.  64-bit floats throughout.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------
    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic ------------------------------------------------------------
    def __add__(self, other):
        a, b = self, Tensor._lift(other)

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))
        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(-g)
        return Tensor._make(-a.data, (a,), bw)

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        a, b = self, Tensor._lift(other)

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))
        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, Tensor._lift(other)

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data ** 2), b.shape))
        return Tensor._make(a.data / b.data, (a, b), bw)

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, p):
        assert np.isscalar(p)
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(g * p * a.data ** (p - 1))
        return Tensor._make(a.data ** p, (a,), bw)

    def __matmul__(self, other):
        a, b = self, Tensor._lift(other)

        def bw(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accum(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accum(_unbroadcast(gb, b.shape))
        return Tensor._make(np.matmul(a.data, b.data), (a, b), bw)

    # -- nonlinearities ----------------------------------------------------------
    def tanh(self):
        a = self
        y = np.tanh(a.data)

        def bw(g):
            if a.requires_grad:
                a._accum(g * (1 - y ** 2))
        return Tensor._make(y, (a,), bw)

    def sigmoid(self):
        a = self
        with np.errstate(over="ignore"):  # exp overflow saturates to 0/1
            y = 1.0 / (1.0 + np.exp(-a.data))

        def bw(g):
            if a.requires_grad:
                a._accum(g * y * (1 - y))
        return Tensor._make(y, (a,), bw)

    def relu(self):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(g * (a.data > 0))
        return Tensor._make(np.maximum(a.data, 0), (a,), bw)

    def leaky_relu(self, slope: float = 0.2):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(g * np.where(a.data > 0, 1.0, slope))
        return Tensor._make(np.where(a.data > 0, a.data, slope * a.data), (a,), bw)

    def exp(self):
        a = self
        y = np.exp(a.data)

        def bw(g):
            if a.requires_grad:
                a._accum(g * y)
        return Tensor._make(y, (a,), bw)

    def log(self):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(g / a.data)
        return Tensor._make(np.log(a.data), (a,), bw)

    def softmax(self, axis: int = -1):
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            if a.requires_grad:
                dot = (g * y).sum(axis=axis, keepdims=True)
                a._accum(y * (g - dot))
        return Tensor._make(y, (a,), bw)

    # -- shape ops ---------------------------------------------------------------
    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def bw(g):
            if a.requires_grad:
                a._accum(g.reshape(a.shape))
        return Tensor._make(a.data.reshape(shape), (a,), bw)

    def swapaxes(self, ax1: int, ax2: int):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(np.swapaxes(g, ax1, ax2))
        return Tensor._make(np.swapaxes(a.data, ax1, ax2), (a,), bw)

    def __getitem__(self, idx):
        a = self

        def bw(g):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                np.add.at(full, idx, g)
                a._accum(full)
        return Tensor._make(a.data[idx], (a,), bw)

    # -- reductions ----------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def bw(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accum(np.broadcast_to(g, a.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, a.shape).copy())
        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else (
            np.prod([self.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- autograd -----------------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen = set()

        def visit(t: Tensor):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    topo.append(node)
                    continue
                if id(node) in seen or not node.requires_grad:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    stack.append((p, False))

        visit(self)
        self._accum(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())


def concat(tensors: list, axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offs = np.cumsum([0] + sizes)

    def bw(g):
        for t, o, s in zip(tensors, offs, sizes):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(o, o + s)
                t._accum(g[tuple(sl)])
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    shape = shape if shape is not None else (fan_in, fan_out)
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-lim, lim, size=shape), requires_grad=True)


class Module:
    """Anything with trainable parameters; subclasses set ``_params``."""

    def parameters(self) -> list:
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Tensor) and v.requires_grad:
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append(item)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> list:
        return [p.data for p in self.parameters()]

    def set_state_arrays(self, arrays: list) -> None:
        params = self.parameters()
        assert len(params) == len(arrays)
        for p, a in zip(params, arrays):
            p.data = a.copy()


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, activation: str | None = None,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = glorot(rng, n_in, n_out)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.W + self.b
        if self.activation == "tanh":
            y = y.tanh()
        elif self.activation == "relu":
            y = y.relu()
        elif self.activation == "sigmoid":
            y = y.sigmoid()
        elif self.activation is not None:
            raise ValueError(f"unknown activation {self.activation!r}")
        return y


class GRUCell(Module):
    """Standard gated recurrent unit; one step per call."""

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_hidden = n_hidden
        self.Wz = glorot(rng, n_in, n_hidden)
        self.Uz = glorot(rng, n_hidden, n_hidden)
        self.bz = Tensor(np.zeros(n_hidden), requires_grad=True)
        self.Wr = glorot(rng, n_in, n_hidden)
        self.Ur = glorot(rng, n_hidden, n_hidden)
        self.br = Tensor(np.zeros(n_hidden), requires_grad=True)
        self.Wn = glorot(rng, n_in, n_hidden)
        self.Un = glorot(rng, n_hidden, n_hidden)
        self.bn = Tensor(np.zeros(n_hidden), requires_grad=True)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        z = (x @ self.Wz + h @ self.Uz + self.bz).sigmoid()
        r = (x @ self.Wr + h @ self.Ur + self.br).sigmoid()
        n = (x @ self.Wn + (r * h) @ self.Un + self.bn).tanh()
        return (1.0 - z) * n + z * h

    def init_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)))


class Adam:
    """Adaptive moment estimation."""

    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad ** 2
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - Tensor._lift(target)
    return (diff * diff).mean()


def numeric_gradient(f, param: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar-valued ``f()`` w.r.t. ``param``."""
    g = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g
