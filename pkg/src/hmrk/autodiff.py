"""Reverse-mode automatic differentiation over dense float64 tensors.

Build-by-run: every op records a backward closure on the output tensor, and
``Tensor.backward()`` walks the recorded graph in reverse topological order.
All data is float64, C-order. Forward values are checked for finiteness after
every op so a diverging graph fails loudly at the node that produced the bad
value instead of at the loss.
"""

from __future__ import annotations

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    """Operands fed to an op do not have compatible shapes."""


class NonFiniteError(AutodiffError):
    """An op produced NaN or infinity in its forward pass."""


_op_serial = 0


def _next_op_id(name):
    global _op_serial
    _op_serial += 1
    return "%s#%d" % (name, _op_serial)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "op_id")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()
        self.op_id = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = " grad" if self.requires_grad else ""
        return "Tensor(shape=%s%s)" % (self.data.shape, tag)

    def item(self):
        return self.data.item()

    def detach(self):
        """Copy of this tensor cut off from the graph."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(g, self.data.shape)

    def backward(self, seed=None):
        """Backpropagate from this tensor to every reachable leaf.

        `seed` defaults to ones; it must match this tensor's shape. Raises if
        this tensor is not part of a recorded graph (i.e. no forward pass has
        produced it from tensors that require grad).
        """
        if self._backward is None and not self.requires_grad:
            raise AutodiffError(
                "backward() called on a tensor that is not part of a graph; "
                "run a forward pass over tensors with requires_grad first"
            )
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ShapeError(
                    "seed gradient shape %s does not match output shape %s"
                    % (seed.shape, self.data.shape)
                )

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate_grad(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swap_last_axes(self):
        return swap_last_axes(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x):
    """Non-differentiable tensor wrapping `x` (no copy if already float64)."""
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False)


def _make_output(name, value, parents, backward):
    op_id = _next_op_id(name)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError("non-finite values produced by op %s" % op_id)
    out = Tensor(value)
    out.op_id = op_id
    if any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- primitives ----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = a.data + b.data
    except ValueError:
        raise ShapeError("add: cannot broadcast %s with %s" % (a.shape, b.shape))

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return _make_output("add", value, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = a.data - b.data
    except ValueError:
        raise ShapeError("sub: cannot broadcast %s with %s" % (a.shape, b.shape))

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(-g)

    return _make_output("sub", value, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = a.data * b.data
    except ValueError:
        raise ShapeError("mul: cannot broadcast %s with %s" % (a.shape, b.shape))

    def backward(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    return _make_output("mul", value, (a, b), backward)


def neg(a):
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(-g)

    return _make_output("neg", -a.data, (a,), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            value = a.data / b.data
    except ValueError:
        raise ShapeError("div: cannot broadcast %s with %s" % (a.shape, b.shape))

    def backward(g):
        a.accumulate_grad(g / b.data)
        b.accumulate_grad(-g * a.data / (b.data * b.data))

    return _make_output("div", value, (a, b), backward)


def reciprocal(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 1.0 / a.data

    def backward(g):
        a.accumulate_grad(-g * value * value)

    return _make_output("reciprocal", value, (a,), backward)


def matmul(a, b):
    """Matrix product with broadcasting over leading (stack) dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul: operands must have >= 2 dims, got %s and %s" % (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: inner dims differ, %s @ %s" % (a.shape, b.shape))
    try:
        value = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul: cannot broadcast %s @ %s" % (a.shape, b.shape))

    def backward(g):
        a.accumulate_grad(g @ np.swapaxes(b.data, -1, -2))
        b.accumulate_grad(np.swapaxes(a.data, -1, -2) @ g)

    return _make_output("matmul", value, (a, b), backward)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0.0

    def backward(g):
        a.accumulate_grad(g * mask)

    return _make_output("relu", a.data * mask, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    value = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a.accumulate_grad(g * value * (1.0 - value))

    return _make_output("sigmoid", value, (a,), backward)


def tabs(a):
    a = as_tensor(a)
    sign = np.sign(a.data)

    def backward(g):
        # subgradient 0 at exactly 0
        a.accumulate_grad(g * sign)

    return _make_output("abs", np.abs(a.data), (a,), backward)


def square(a):
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(g * 2.0 * a.data)

    return _make_output("square", a.data * a.data, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    value = np.sqrt(a.data)

    def backward(g):
        a.accumulate_grad(g * 0.5 / value)

    return _make_output("sqrt", value, (a,), backward)


def sin(a):
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(g * np.cos(a.data))

    return _make_output("sin", np.sin(a.data), (a,), backward)


def cos(a):
    a = as_tensor(a)

    def backward(g):
        a.accumulate_grad(-g * np.sin(a.data))

    return _make_output("cos", np.cos(a.data), (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    old_shape = a.data.shape
    try:
        value = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape: cannot view %s as %s" % (old_shape, shape))

    def backward(g):
        a.accumulate_grad(g.reshape(old_shape))

    return _make_output("reshape", value, (a,), backward)


def swap_last_axes(a):
    """Transpose of the trailing two axes (stack dims untouched)."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError("swap_last_axes: need >= 2 dims, got %s" % (a.shape,))

    def backward(g):
        a.accumulate_grad(np.swapaxes(g, -1, -2))

    return _make_output("transpose", np.ascontiguousarray(np.swapaxes(a.data, -1, -2)), (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes %s along axis %d"
            % ([t.shape for t in tensors], axis)
        )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            t.accumulate_grad(g[tuple(index)])

    return _make_output("concat", value, tuple(tensors), backward)


def take(a, index):
    """Basic indexing / slicing; gradients scatter-add back."""
    a = as_tensor(a)
    try:
        value = a.data[index]
    except IndexError:
        raise ShapeError("take: index %r invalid for shape %s" % (index, a.shape))

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a.accumulate_grad(full)

    return _make_output("take", np.ascontiguousarray(value), (a,), backward)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    value = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.data.shape))

    return _make_output("sum", np.asarray(value, dtype=np.float64), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    value = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(value.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.data.shape) / count)

    return _make_output("mean", np.asarray(value, dtype=np.float64), (a,), backward)


def dropout(a, p, rng):
    """Explicit seeded dropout-mask node (inverted scaling).

    The mask is drawn from `rng` at graph-build time, so training is exactly
    reproducible from the rng state. Callers skip this node entirely in
    evaluation mode.
    """
    a = as_tensor(a)
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1), got %r" % p)
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def backward(g):
        a.accumulate_grad(g * mask)

    return _make_output("dropout", a.data * mask, (a,), backward)


# -- verification harness -------------------------------------------------


def grad_check(fn, params, step=1e-6, scale_floor=1e-3):
    """Max relative error between analytic and central-difference gradients.

    `fn` rebuilds the (scalar-output) graph from the current contents of
    `params` on every call; `params` is an iterable of leaf tensors with
    requires_grad set. Relative error per entry is
    |analytic - numeric| / max(|analytic|, |numeric|, scale_floor); the floor
    keeps near-zero gradients from inflating the ratio beyond what a 1e-6
    central difference can resolve in float64.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    out = fn()
    if out.size != 1:
        raise ShapeError("grad_check: fn must return a scalar, got %s" % (out.shape,))
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn().data.item()
            flat[i] = orig - step
            lo = fn().data.item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            a = ana.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), scale_floor)
            if err > worst:
                worst = err
    return worst
