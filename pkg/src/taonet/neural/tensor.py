"""Reverse-mode automatic differentiation over numpy arrays.

Small enough to read in one sitting, fast enough for desk-scale training:
Python-level overhead is per-op, all heavy lifting stays inside BLAS. Every
op records a backward closure; ``Tensor.backward()`` walks the graph in
reverse topological order and accumulates gradients into ``.grad``.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _result(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray, owned: bool = False) -> None:
        # `owned` marks buffers freshly allocated by the caller: safe to keep
        # by reference and mutate. Shared/view buffers are copied on first
        # store because later contributions accumulate in place.
        if self.grad is None:
            if owned and grad.dtype == self.data.dtype:
                self.grad = grad
            else:
                self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, grad=None) -> None:
        """Backpropagate from this tensor (scalar unless `grad` is given)."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionMismatch("backward() without grad needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _wrap(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        if isinstance(other, (int, float)):  # python scalars keep the dtype
            a = self

            def backward_scalar(g):
                a._accumulate(g)

            return self._result(a.data + other, (a,), backward_scalar)
        other = self._wrap(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                ga = _unbroadcast(g, a.shape)
                a._accumulate(ga, owned=ga is not g)
            if b.requires_grad:
                gb = _unbroadcast(g, b.shape)
                b._accumulate(gb, owned=gb is not g)

        return self._result(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g, owned=True)

        return self._result(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            a = self

            def backward_scalar(g):
                a._accumulate(g * other, owned=True)

            return self._result(a.data * other, (a,), backward_scalar)
        other = self._wrap(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape), owned=True)
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape), owned=True)

        return self._result(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise DimensionMismatch("tensor/tensor division is not supported")
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                ga = np.matmul(g, b.data.swapaxes(-1, -2))
                a._accumulate(_unbroadcast(ga, a.shape), owned=True)
            if b.requires_grad:
                gb = np.matmul(a.data.swapaxes(-1, -2), g)
                b._accumulate(_unbroadcast(gb, b.shape), owned=True)

        return self._result(np.matmul(a.data, b.data), (a, b), backward)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        a = self
        old = a.shape

        def backward(g):
            a._accumulate(g.reshape(old))

        return self._result(a.data.reshape(*shape), (a,), backward)

    def transpose(self, *axes):
        a = self
        inverse = np.argsort(axes)

        def backward(g):
            a._accumulate(g.transpose(inverse))

        return self._result(a.data.transpose(axes), (a,), backward)

    @property
    def T(self):
        a = self

        def backward(g):
            a._accumulate(g.T)

        return self._result(a.data.T, (a,), backward)

    def __getitem__(self, key):
        # Basic (non-repeating) indexing only; enough for time-step slicing.
        a = self

        def backward(g):
            full = np.zeros_like(a.data)
            full[key] += g
            a._accumulate(full, owned=True)

        return self._result(a.data[key], (a,), backward)

    def sum(self, axis=None, keepdims=False):
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).astype(a.dtype),
                          owned=True)

        return self._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    # -- nonlinearities -----------------------------------------------------

    def sigmoid(self):
        a = self
        out_data = 1.0 / (1.0 + np.exp(-a.data))

        def backward(g):
            a._accumulate(g * out_data * (1.0 - out_data), owned=True)

        return self._result(out_data, (a,), backward)

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def backward(g):
            a._accumulate(g * (1.0 - out_data * out_data), owned=True)

        return self._result(out_data, (a,), backward)

    def relu(self):
        a = self
        out_data = np.maximum(a.data, 0)

        def backward(g):
            a._accumulate(g * (a.data > 0), owned=True)

        return self._result(out_data, (a,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                t._accumulate(g[tuple(index)])
            offset += size

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._result(data, tuple(tensors), backward)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup `table[indices]` with scatter-add backward."""
    indices = np.asarray(indices)

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, indices, g)
        table._accumulate(grad, owned=True)

    return Tensor._result(table.data[indices], (table,), backward)


def contiguous(x: Tensor) -> Tensor:
    """C-contiguous copy (no-op view if already contiguous)."""

    def backward(g):
        x._accumulate(g)

    return Tensor._result(np.ascontiguousarray(x.data), (x,), backward)


def scaled_masked_softmax(x: Tensor, scale: float,
                          mask_add: np.ndarray | None = None,
                          axis: int = -1) -> Tensor:
    """softmax(x * scale + mask_add) fused to minimize large temporaries."""
    scaled = x.data * scale
    if mask_add is not None:
        scaled += mask_add
    scaled -= scaled.max(axis=axis, keepdims=True)
    np.exp(scaled, out=scaled)
    scaled /= scaled.sum(axis=axis, keepdims=True)
    out_data = scaled

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        gx = g - inner
        gx *= out_data
        gx *= scale
        x._accumulate(gx, owned=True)

    return Tensor._result(out_data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (g - inner), owned=True)

    return Tensor._result(out_data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z

    def backward(g):
        x._accumulate(g - np.exp(out_data) * g.sum(axis=axis, keepdims=True),
                      owned=True)

    return Tensor._result(out_data, (x,), backward)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits, stable for large |z|."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    mean = np.asarray(loss.mean(), dtype=z.dtype)

    def backward(g):
        p = 1.0 / (1.0 + np.exp(-z))
        logits._accumulate(g * (p - y) / z.size, owned=True)

    return Tensor._result(mean, (logits,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer `labels` under `logits` rows."""
    labels = np.asarray(labels)
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    picked = log_softmax(logits, axis=-1) * Tensor(onehot)
    return -(picked.sum() / labels.shape[0])
