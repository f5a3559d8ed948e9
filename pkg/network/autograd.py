"""Small reverse-mode tape over numpy arrays.

Every op returns a Tensor holding its parents and a closure that pushes the
output gradient back to them. `Tensor.backward` walks the graph in reverse
topological order, so shared sub-expressions accumulate correctly.
"""
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from geometry.epipolar import polar_sq_distance_grad
from matching.coattention import attend
from matching.layer import bilinear_stencil, softmax as _softmax

Scalar = Union["Tensor", float]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        parents: Tuple["Tensor", ...] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        requires_grad: bool = False,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data) if grad is None else grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other: Scalar) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Scalar) -> "Tensor":
        return add(self, scale(_lift(other), -1.0))

    def __mul__(self, other: float) -> "Tensor":
        return scale(self, float(other))

    __rmul__ = __mul__

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}, name={self.name!r})"


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data)


def _lift(x: Scalar) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def add(a: Scalar, b: Scalar) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.data + b.data

    def backward(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        a.accumulate(g * factor)

    return Tensor(a.data * factor, (a,), backward)


def mul_const(a: Tensor, c: np.ndarray) -> Tensor:
    c = np.asarray(c, dtype=np.float64)

    def backward(g):
        a.accumulate(_unbroadcast(g * c, a.data.shape))

    return Tensor(a.data * c, (a,), backward)


def total(tensors: Iterable[Tensor]) -> Tensor:
    tensors = [_lift(t) for t in tensors]

    def backward(g):
        for t in tensors:
            t.accumulate(g)

    return Tensor(sum((t.data for t in tensors), np.zeros(())), tuple(tensors), backward)


def take(a: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a.accumulate(full)

    return Tensor(a.data[index], (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(part)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0

    def backward(g):
        x.accumulate(g * mask)

    return Tensor(np.where(mask, x.data, 0.0), (x,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """'Same'-padded 2-D convolution of a (C_in, H, W) input with (C_out, C_in, k, k) kernels."""
    c_in, height, width = x.data.shape
    c_out, _, k, _ = w.data.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    h_out = (height + 2 * pad - k) // stride + 1
    w_out = (width + 2 * pad - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :h_out, :w_out]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out, c_in * k * k)
    kernel = w.data.reshape(c_out, -1)
    out = (cols @ kernel.T + b.data).T.reshape(c_out, h_out, w_out)

    def backward(g):
        g_flat = g.reshape(c_out, -1).T
        w.accumulate((g_flat.T @ cols).reshape(w.data.shape))
        b.accumulate(g_flat.sum(axis=0))
        if not x.requires_grad:
            return
        g_cols = (g_flat @ kernel).reshape(h_out, w_out, c_in, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += g_cols[:, :, :, i, j].transpose(2, 0, 1)
        x.accumulate(gxp[:, pad:pad + height, pad:pad + width])

    return Tensor(out, (x, w, b), backward)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    out = x.data.repeat(factor, axis=1).repeat(factor, axis=2)

    def backward(g):
        c, h, w = x.data.shape
        x.accumulate(g.reshape(c, h, factor, w, factor).sum(axis=(2, 4)))

    return Tensor(out, (x,), backward)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Unit-norm descriptors along axis 0; cells with zero norm pass through unchanged."""
    norms = np.sqrt(np.sum(x.data * x.data, axis=0, keepdims=True))
    live = norms > eps
    safe = np.where(live, norms, 1.0)
    out = np.where(live, x.data / safe, x.data)

    def backward(g):
        proj = np.sum(g * out, axis=0, keepdims=True)
        x.accumulate(np.where(live, (g - out * proj) / safe, g))

    return Tensor(out, (x,), backward)


def bilinear_sample(fmap: Tensor, row: Scalar, col: Scalar) -> Tensor:
    """Descriptor (C,) at a continuous cell coordinate; differentiable in the map and the coordinate."""
    row_t, col_t = _lift(row), _lift(col)
    _, height, width = fmap.data.shape
    rows, cols, weights, d_row, d_col = bilinear_stencil(row_t.item(), col_t.item(), height, width)
    corners = fmap.data[:, rows, cols]

    def backward(g):
        if fmap.requires_grad:
            full = np.zeros_like(fmap.data)
            for i in range(4):
                full[:, rows[i], cols[i]] += g * weights[i]
            fmap.accumulate(full)
        row_t.accumulate(g @ corners @ d_row)
        col_t.accumulate(g @ corners @ d_col)

    return Tensor(corners @ weights, (fmap, row_t, col_t), backward)


def crop(fmap: Tensor, r0: int, r1: int, c0: int, c1: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(fmap.data)
        full[:, r0:r1, c0:c1] = g
        fmap.accumulate(full)

    return Tensor(fmap.data[:, r0:r1, c0:c1], (fmap,), backward)


def correlate(descriptor: Tensor, block: Tensor, temperature: float = 1.0) -> Tensor:
    """Flattened logits descriptor^T block[:, i, j] / temperature."""
    logits = np.einsum("c,chw->hw", descriptor.data, block.data).ravel() / temperature

    def backward(g):
        g2 = g.reshape(block.data.shape[1:]) / temperature
        descriptor.accumulate(np.einsum("hw,chw->c", g2, block.data))
        block.accumulate(descriptor.data[:, None, None] * g2[None])

    return Tensor(logits, (descriptor, block), backward)


def softmax(logits: Tensor) -> Tensor:
    p = _softmax(logits.data)

    def backward(g):
        logits.accumulate(p * (g - np.dot(g, p)))

    return Tensor(p, (logits,), backward)


def expectation(p: Tensor, coords: np.ndarray) -> Tensor:
    coords = np.asarray(coords, dtype=np.float64)

    def backward(g):
        p.accumulate(coords @ g)

    return Tensor(p.data @ coords, (p,), backward)


def polar_sq_distance_to(point: Tensor, target: Tuple[float, float]) -> Tensor:
    """Squared polar chord distance from a (2,) (r, theta) tensor to a fixed target."""
    r2, t2 = point.data
    r1, t1 = target
    value = r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * np.cos(t1 - t2)
    grad = polar_sq_distance_grad(target, (r2, t2))

    def backward(g):
        point.accumulate(g * grad)

    return Tensor(value, (point,), backward)


def co_attention(g: Tensor, h: Tensor) -> Tensor:
    """Attended (C, H, W) map: each cell of g becomes a softmax-weighted sum of h's cells."""
    out, attn = attend(g.data, h.data)
    c = g.data.shape[0]
    gf = g.data.reshape(c, -1)
    hf = h.data.reshape(c, -1)

    def backward(grad):
        go = grad.reshape(c, -1)
        g_attn = go.T @ hf
        g_logits = attn * (g_attn - np.sum(g_attn * attn, axis=1, keepdims=True))
        g.accumulate((hf @ g_logits.T).reshape(g.data.shape))
        h.accumulate((go @ attn + gf @ g_logits).reshape(h.data.shape))

    return Tensor(out, (g, h), backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g
