"""Dense float64 tensors with reverse-mode automatic differentiation.

Small dynamic-tape engine: each operation records its parents and a closure
that routes the incoming gradient back to them. Enough coverage for MLPs,
batch normalization, and softmax-based losses; nothing more.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "matmul", "relu", "log_softmax", "softmax", "concat_rows"]


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    Gradients accumulate with ``+=`` on backward; call :meth:`zero_grad`
    between steps. Tensors created by operations carry closures back to
    their parents, forming an implicit tape.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(values, parents, backward):
        out = Tensor(values)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    # -- autodiff --------------------------------------------------------------

    def backward(self):
        """Run reverse-mode differentiation from a scalar tensor."""
        if self.values.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.values))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ------------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        out_vals = self.values + other.values

        def backward(g):
            self._accumulate(_unbroadcast(g, self.values.shape))
            other._accumulate(_unbroadcast(g, other.values.shape))

        return Tensor._from_op(out_vals, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._from_op(-self.values, (self,), backward)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out_vals = self.values * other.values

        def backward(g):
            self._accumulate(_unbroadcast(g * other.values, self.values.shape))
            other._accumulate(_unbroadcast(g * self.values, other.values.shape))

        return Tensor._from_op(out_vals, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out_vals = self.values / other.values

        def backward(g):
            self._accumulate(_unbroadcast(g / other.values, self.values.shape))
            other._accumulate(
                _unbroadcast(-g * self.values / (other.values**2), other.values.shape)
            )

        return Tensor._from_op(out_vals, (self, other), backward)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        out_vals = self.values**exponent

        def backward(g):
            self._accumulate(g * exponent * self.values ** (exponent - 1))

        return Tensor._from_op(out_vals, (self,), backward)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        def backward(g):
            self._accumulate(g.T)

        return Tensor._from_op(self.values.T, (self,), backward)

    # -- reductions and elementwise maps ----------------------------------------

    def sum(self, axis=None):
        out_vals = self.values.sum(axis=axis)

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.values.shape).copy())
            else:
                self._accumulate(np.broadcast_to(np.expand_dims(g, axis), self.values.shape).copy())

        return Tensor._from_op(out_vals, (self,), backward)

    def mean(self, axis=None):
        n = self.values.size if axis is None else self.values.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def log(self):
        def backward(g):
            self._accumulate(g / self.values)

        return Tensor._from_op(np.log(self.values), (self,), backward)

    def exp(self):
        out_vals = np.exp(self.values)

        def backward(g):
            self._accumulate(g * out_vals)

        return Tensor._from_op(out_vals, (self,), backward)

    def sqrt(self):
        out_vals = np.sqrt(self.values)

        def backward(g):
            self._accumulate(g * 0.5 / out_vals)

        return Tensor._from_op(out_vals, (self,), backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with gradients dA = dC @ B.T and dB = A.T @ dC."""
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    if a.values.shape[1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_vals = a.values @ b.values

    def backward(g):
        a._accumulate(g @ b.values.T)
        b._accumulate(a.values.T @ g)

    return Tensor._from_op(out_vals, (a, b), backward)


def relu(t: Tensor) -> Tensor:
    mask = t.values > 0.0

    def backward(g):
        t._accumulate(g * mask)

    return Tensor._from_op(t.values * mask, (t,), backward)


def log_softmax(t: Tensor) -> Tensor:
    """Row-wise log-softmax with max-subtraction for stability.

    The subtracted row max is treated as a constant; softmax is invariant to
    per-row shifts, so gradients are unaffected.
    """
    if t.values.size == 0:
        raise ValueError("log_softmax on empty input")
    vals = t.values if t.values.ndim == 2 else t.values.reshape(1, -1)
    squeeze = t.values.ndim == 1
    shifted = vals - vals.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_vals = shifted - lse
    probs = np.exp(out_vals)

    def backward(g):
        g2 = g.reshape(1, -1) if squeeze else g
        gt = g2 - probs * g2.sum(axis=1, keepdims=True)
        t._accumulate(gt.reshape(t.values.shape))

    return Tensor._from_op(out_vals.reshape(t.values.shape), (t,), backward)


def softmax(t: Tensor) -> Tensor:
    """Row-wise softmax; outputs positive and summing to one per row."""
    return log_softmax(t).exp()


def concat_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 2-D tensors along axis 0 with gradient routing back to each part."""
    parts = [t.values for t in tensors]
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            t._accumulate(g[lo:hi])

    return Tensor._from_op(np.concatenate(parts, axis=0), tuple(tensors), backward)
