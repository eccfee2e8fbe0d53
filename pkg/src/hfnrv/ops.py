# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Differentiable ops on Tensors.

Image-like tensors are channel-first (C x H x W). Every op computes its
forward pass with numpy and registers a backward closure.
"""
import math
from typing import Optional, Sequence, Tuple, Union
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from hfnrv.autograd import Tensor


Operand = Union[Tensor, float, int, np.ndarray]

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def _as_tensor(value: Operand, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value), dtype=like.dtype)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_operands(x: Operand, y: Operand) -> Tuple[Tensor, Tensor]:
    if isinstance(x, Tensor):
        y = _as_tensor(y, x)
    elif isinstance(y, Tensor):
        x = _as_tensor(x, y)
    else:
        raise TypeError("At least one operand must be a Tensor")
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise ValueError(f"Shapes {x.shape} and {y.shape} do not broadcast")
    return x, y


def add(x: Operand, y: Operand) -> Tensor:
    x, y = _binary_operands(x, y)

    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return Tensor.from_op(x.data + y.data, (x, y), backward, "add")


def sub(x: Operand, y: Operand) -> Tensor:
    x, y = _binary_operands(x, y)

    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return Tensor.from_op(x.data - y.data, (x, y), backward, "sub")


def mul(x: Operand, y: Operand) -> Tensor:
    x, y = _binary_operands(x, y)

    def backward(g):
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return Tensor.from_op(x.data * y.data, (x, y), backward, "mul")


def div(x: Operand, y: Operand) -> Tensor:
    x, y = _binary_operands(x, y)

    def backward(g):
        gx = g / y.data
        return _unbroadcast(gx, x.shape), _unbroadcast(-gx * x.data / y.data, y.shape)

    return Tensor.from_op(x.data / y.data, (x, y), backward, "div")


def neg(x: Tensor) -> Tensor:
    return Tensor.from_op(-x.data, (x,), lambda g: (-g,), "neg")


def square(x: Tensor) -> Tensor:
    return Tensor.from_op(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


def abs_(x: Tensor) -> Tensor:
    return Tensor.from_op(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def sin(x: Tensor) -> Tensor:
    return Tensor.from_op(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),), "sin")


def cos(x: Tensor) -> Tensor:
    return Tensor.from_op(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),), "cos")


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return Tensor.from_op(np.asarray(data), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        count = np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return div(sum_(x, axis=axis, keepdims=keepdims), float(count))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Tensor.from_op(
        x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape"
    )


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ValueError(f"transpose2d needs a matrix, got shape {x.shape}")
    return Tensor.from_op(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"Cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(y, (x,), backward, "softmax")


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return Tensor.from_op(np.array(x.data[index]), (x,), backward, "getitem")


def take(x: Tensor, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Gather entries along one axis; repeated indices accumulate in backward."""
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (gx,)

    return Tensor.from_op(np.take(x.data, idx, axis=axis), (x,), backward, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    for t in tensors[1:]:
        a = list(t.shape)
        b = list(tensors[0].shape)
        a[axis] = b[axis] = 0
        if a != b:
            raise ValueError(
                f"concat shapes {tensors[0].shape} and {t.shape} differ off axis {axis}"
            )
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return np.split(g, np.cumsum(sizes)[:-1], axis=axis)

    return Tensor.from_op(data, tuple(tensors), backward, "concat")


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    t = np.tanh(_GELU_K * (v + _GELU_C * v ** 3))

    def backward(g):
        dt = (1 - t * t) * _GELU_K * (1 + 3 * _GELU_C * v * v)
        return (g * (0.5 * (1 + t) + 0.5 * v * dt),)

    return Tensor.from_op(0.5 * v * (1 + t), (x,), backward, "gelu")


def harmonic(x: Tensor, omega1: Tensor, omega2: Tensor) -> Tensor:
    """omega1 * sin(x) + omega2 * cos(x), with scalar omegas."""
    s = np.sin(x.data)
    c = np.cos(x.data)

    def backward(g):
        gx = g * (omega1.data * c - omega2.data * s)
        g1 = np.sum(g * s).reshape(omega1.shape)
        g2 = np.sum(g * c).reshape(omega2.shape)
        return gx, g1, g2

    data = omega1.data * s + omega2.data * c
    return Tensor.from_op(
        data.astype(x.dtype), (x, omega1, omega2), backward, "harmonic"
    )


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalizes each pixel's channel vector, then scales and shifts."""
    if x.ndim != 3 or weight.shape != (x.shape[0],) or bias.shape != (x.shape[0],):
        raise ValueError(
            f"layer_norm shapes x={x.shape} weight={weight.shape} bias={bias.shape}"
        )
    n = x.shape[0]
    mu = x.data.mean(axis=0, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.data.var(axis=0, keepdims=True) + eps)
    xhat = (x.data - mu) * inv_std
    w = weight.data[:, None, None]

    def backward(g):
        gxhat = g * w
        gx = (inv_std / n) * (
            n * gxhat
            - gxhat.sum(axis=0, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=0, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    data = w * xhat + bias.data[:, None, None]
    return Tensor.from_op(
        data.astype(x.dtype), (x, weight, bias), backward, "layer_norm"
    )


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Cross-correlation of a C x H x W input with O x C/groups x kh x kw kernels."""
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError(
            f"conv2d needs CxHxW input and 4-D kernel, got {x.shape} {weight.shape}"
        )
    c, h, w = x.shape
    o, cg, kh, kw = weight.shape
    if stride < 1 or padding < 0 or groups < 1:
        raise ValueError(f"Invalid stride={stride} padding={padding} groups={groups}")
    if c % groups or o % groups or cg * groups != c:
        raise ValueError(
            f"Kernel {weight.shape} with groups={groups} "
            f"does not match {c} input channels"
        )
    if bias is not None and bias.shape != (o,):
        raise ValueError(f"Bias shape {bias.shape} does not match {o} output channels")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(f"Kernel {kh}x{kw} larger than padded input {h}x{w}+{padding}")

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding)))
    # C x Ho x Wo x kh x kw view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1:3]
    og = o // groups
    win_g = win.reshape(groups, cg, ho, wo, kh, kw)
    w_g = weight.data.reshape(groups, og, cg, kh, kw)
    out = np.einsum("gocij,gchwij->gohw", w_g, win_g, optimize=True).reshape(o, ho, wo)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backward(g):
        g_g = g.reshape(groups, og, ho, wo)
        gw = np.einsum("gohw,gchwij->gocij", g_g, win_g, optimize=True)
        gw = gw.reshape(weight.shape)
        cols = np.einsum("gocij,gohw->gcijhw", w_g, g_g, optimize=True).reshape(
            c, kh, kw, ho, wo
        )
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[
                    :,
                    i : i + stride * (ho - 1) + 1 : stride,
                    j : j + stride * (wo - 1) + 1 : stride,
                ] += cols[:, i, j]
        gx = gxp[:, padding : padding + h, padding : padding + w] if padding else gxp
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out.astype(x.dtype, copy=False), parents, backward, "conv2d")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """r^2*C x H x W -> C x rH x rW.

    out(c, rY+dy, rX+dx) = in(c*r^2 + dy*r + dx, Y, X).
    """
    if x.ndim != 3 or r < 1 or x.shape[0] % (r * r):
        raise ValueError(f"Cannot pixel_shuffle shape {x.shape} by {r}")
    cr, h, w = x.shape
    c = cr // (r * r)
    data = x.data.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2)
    data = data.reshape(c, h * r, w * r)

    def backward(g):
        return (g.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(cr, h, w),)

    return Tensor.from_op(data, (x,), backward, "pixel_shuffle")


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of pixel_shuffle."""
    if x.ndim != 3 or r < 1 or x.shape[1] % r or x.shape[2] % r:
        raise ValueError(f"Cannot pixel_unshuffle shape {x.shape} by {r}")
    c, hr, wr = x.shape
    h, w = hr // r, wr // r
    data = x.data.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3)
    data = data.reshape(c * r * r, h, w)

    def backward(g):
        return (g.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, hr, wr),)

    return Tensor.from_op(data, (x,), backward, "pixel_unshuffle")


def _bilinear_matrix(size_in: int, size_out: int, dtype) -> np.ndarray:
    # half-pixel centers, edges clamped
    m = np.zeros((size_out, size_in), dtype=dtype)
    src = (np.arange(size_out) + 0.5) * (size_in / size_out) - 0.5
    src = np.clip(src, 0, size_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, size_in - 1)
    frac = src - i0
    rows = np.arange(size_out)
    np.add.at(m, (rows, i0), 1 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def resize_bilinear(x: Tensor, height: int, width: int) -> Tensor:
    if x.ndim != 3 or height < 1 or width < 1:
        raise ValueError(f"Cannot resize {x.shape} to {height}x{width}")
    ry = _bilinear_matrix(x.shape[1], height, x.dtype)
    rx = _bilinear_matrix(x.shape[2], width, x.dtype)
    data = ry @ x.data @ rx.T

    def backward(g):
        return (ry.T @ g @ rx,)

    return Tensor.from_op(data, (x,), backward, "resize_bilinear")
