"""Dense 64-bit tensors with reverse-mode automatic differentiation.

Small by design: only the operations needed by the autoencoders, the
quadratic latent models and the training losses are supported.  Values are
numpy arrays; every operation records its parents so that a single reverse
sweep from a scalar root fills the ``grad`` slot of every reachable leaf.

Broadcasting is restricted to a leading batch axis (e.g. adding a bias of
shape ``(n,)`` to activations of shape ``(N, n)``) plus python scalars.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "GradientError",
    "add", "sub", "mul", "scale", "matmul", "transpose", "silu", "sigmoid",
    "kron_self", "conv1d", "conv_transpose1d", "concat", "reshape",
    "tsum", "tmean", "tabs", "square", "sqrt",
    "backward", "backward_seed", "zero_grads", "jacobian",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class GradientError(RuntimeError):
    """Raised when a backward pass is requested from an invalid root."""


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the computation graph.

    ``op`` is the tag of the operation that produced this tensor ("leaf"
    for inputs/parameters), ``parents`` the input tensors, and ``_vjp`` the
    backward rule mapping the output gradient to per-parent gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False,
                 op: str = "leaf", parents: tuple = (),
                 vjp: Optional[Callable] = None):
        self.data = _asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # operator sugar; keeps model / loss code readable
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, op, parents, vjp) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, op=op, parents=tuple(parents),
                  vjp=vjp if requires else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after leading-axis broadcast."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] > 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _check_elementwise(op: str, a: Tensor, b: Tensor):
    sa, sb = a.data.shape, b.data.shape
    try:
        np.broadcast_shapes(sa, sb)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {sa} and {sb}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    out = a.data + b.data

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _node(out, "add", (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("subtract", a, b)
    out = a.data - b.data

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return _node(out, "subtract", (a, b), vjp)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scale(a, float(b))
    if not isinstance(a, Tensor) and np.isscalar(a):
        return scale(b, float(a))
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("elementwise-multiply", a, b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(out, "elementwise-multiply", (a, b), vjp)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _node(a.data * c, "scale", (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return _node(out, "matmul", (a, b), vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got {a.shape}")

    def vjp(g):
        return (g.T,)

    return _node(a.data.T, "transpose", (a,), vjp)


def kron_self(z) -> Tensor:
    """Kronecker square of the trailing axis: (..., n) -> (..., n*n)."""
    z = as_tensor(z)
    n = z.shape[-1]
    outer = z.data[..., :, None] * z.data[..., None, :]
    out = outer.reshape(z.shape[:-1] + (n * n,))

    def vjp(g):
        gm = g.reshape(z.shape[:-1] + (n, n))
        gz = np.einsum("...ij,...j->...i", gm, z.data) \
            + np.einsum("...ij,...i->...j", gm, z.data)
        return (gz,)

    return _node(out, "kron-of-vector-with-itself", (z,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _node(s, "sigmoid", (a,), vjp)


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s

    def vjp(g):
        return (g * (s + a.data * s * (1.0 - s)),)

    return _node(out, "silu", (a,), vjp)


# ---------------------------------------------------------------------------
# 1-D convolutions, layout (batch, channels, length)

def _col_index(length_out: int, kernel: int, stride: int) -> np.ndarray:
    return stride * np.arange(length_out)[None, :] + np.arange(kernel)[:, None]


def conv1d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x (N, Cin, L) with w (Cout, Cin, K)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"1-D convolution: got input {x.shape}, weight {w.shape}")
    N, Cin, L = x.shape
    Cout, _, K = w.shape
    Lout = (L + 2 * padding - K) // stride + 1
    if Lout < 1:
        raise DimensionError(
            f"1-D convolution: kernel {K} too large for length {L} "
            f"with padding {padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    idx = _col_index(Lout, K, stride)            # (K, Lout)
    cols = xp[:, :, idx]                          # (N, Cin, K, Lout)
    out = np.einsum("ock,nckl->nol", w.data, cols)

    def vjp(g):
        gw = np.einsum("nol,nckl->ock", g, cols)
        gcols = np.einsum("ock,nol->nckl", w.data, g)
        gxp = np.zeros_like(xp)
        np.add.at(gxp, (slice(None), slice(None), idx), gcols)
        gx = gxp[:, :, padding:padding + L] if padding else gxp
        return (gx, gw)

    return _node(out, "1-D convolution", (x, w), vjp)


def conv_transpose1d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution of x (N, Cin, L) with w (Cin, Cout, K)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"1-D transposed convolution: got input {x.shape}, weight {w.shape}")
    N, Cin, L = x.shape
    _, Cout, K = w.shape
    Lfull = (L - 1) * stride + K
    Lout = Lfull - 2 * padding
    if Lout < 1:
        raise DimensionError(
            f"1-D transposed convolution: output length {Lout} invalid")
    idx = _col_index(L, K, stride)                # (K, L)
    cols = np.einsum("iok,nil->nokl", w.data, x.data)
    ypad = np.zeros((N, Cout, Lfull))
    np.add.at(ypad, (slice(None), slice(None), idx), cols)
    out = ypad[:, :, padding:Lfull - padding] if padding else ypad

    def vjp(g):
        gpad = np.pad(g, ((0, 0), (0, 0), (padding, padding)))
        gcols = gpad[:, :, idx]                   # (N, Cout, K, L)
        gx = np.einsum("iok,nokl->nil", w.data, gcols)
        gw = np.einsum("nil,nokl->iok", x.data, gcols)
        return (gx, gw)

    return _node(out, "1-D transposed convolution", (x, w), vjp)


# ---------------------------------------------------------------------------
# shape manipulation and reductions

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, "concatenate", tuple(tensors), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(out, "reshape", (a,), vjp)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _node(out, "sum", (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape).copy(),)

    return _node(out, "mean", (a,), vjp)


def tabs(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * np.sign(a.data),)

    return _node(np.abs(a.data), "absolute-value", (a,), vjp)


def square(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * 2.0 * a.data,)

    return _node(a.data ** 2, "square", (a,), vjp)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _node(out, "square-root", (a,), vjp)


# ---------------------------------------------------------------------------
# backward machinery

def _toposort(root: Tensor) -> list:
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # children after parents


def backward_seed(root: Tensor, seed: np.ndarray) -> None:
    """Reverse sweep from ``root`` with an explicit output gradient."""
    seed = _asarray(seed)
    if seed.shape != root.data.shape:
        raise GradientError(
            f"seed shape {seed.shape} does not match root shape {root.data.shape}")
    order = _toposort(root)
    accum: dict = {id(root): seed.copy()}
    for node in reversed(order):
        g = accum.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if pg is None or not (parent.requires_grad or parent.parents):
                continue
            key = id(parent)
            if key in accum:
                accum[key] = accum[key] + pg
            else:
                accum[key] = pg


def backward(root: Tensor) -> None:
    """Populate ``grad`` of every reachable requires-grad tensor.

    The root must be scalar (size one)."""
    if root.data.size != 1:
        raise GradientError(
            f"backward requires a scalar root, got shape {root.data.shape}")
    backward_seed(root, np.ones_like(root.data))


def zero_grads(root_or_tensors) -> None:
    """Clear gradient slots; accepts a graph root or an iterable of tensors."""
    if isinstance(root_or_tensors, Tensor):
        for node in _toposort(root_or_tensors):
            node.grad = None
    else:
        for t in root_or_tensors:
            t.grad = None


def jacobian(output: Tensor, wrt: Tensor) -> np.ndarray:
    """Jacobian d(output)/d(wrt) for a 1-D output, one reverse pass per row."""
    if output.ndim != 1:
        raise DimensionError(
            f"jacobian expects a 1-D output, got shape {output.shape}")
    m = output.shape[0]
    rows = np.empty((m,) + wrt.data.shape)
    for i in range(m):
        zero_grads(output)
        seed = np.zeros(m)
        seed[i] = 1.0
        backward_seed(output, seed)
        if wrt.grad is None:
            rows[i] = 0.0
        else:
            rows[i] = wrt.grad
    zero_grads(output)
    return rows
