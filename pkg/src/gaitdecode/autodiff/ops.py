"""Differentiable primitive operations.

All ops take and return :class:`~gaitdecode.autodiff.tensor.Tensor` and
register exact vector-Jacobian products. Broadcasting follows numpy
semantics; gradients are summed back down to each operand's shape.
"""

from __future__ import annotations

import numpy as np

from gaitdecode.autodiff.tensor import Tensor, make_output
from gaitdecode.errors import ShapeError


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_output(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_output(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return make_output(out, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return make_output(out, (a, b), vjp)


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_output(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_output(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_output(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    """Square root with the zero-subgradient convention at 0."""
    out = np.sqrt(a.data)

    def vjp(g):
        denom = 2.0 * out
        ga = np.where(denom > 0.0, g / np.where(denom > 0.0, denom, 1.0), 0.0)
        return (ga,)

    return make_output(out, (a,), vjp)


def powi(a: Tensor, p: float) -> Tensor:
    ad = a.data
    out = ad**p
    return make_output(out, (a,), lambda g: (g * p * ad ** (p - 1.0),))


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, shape),)

    return make_output(out, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.size if axis is None else np.prod(
        [shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp / count, shape),)

    return make_output(out, (a,), vjp)


# ---------------------------------------------------------------------------
# matmul


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.shape} x {b.shape}"
        )
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def vjp(g):
        # contract broadcast batch axes directly instead of materialising
        # the batched outer product and then reducing it
        if ad.ndim == 2 and g.ndim > 2:
            batch = tuple(range(g.ndim - 2))
            ga = np.tensordot(g, bd, axes=(batch + (g.ndim - 1,), batch + (bd.ndim - 1,)))
        else:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if bd.ndim == 2 and g.ndim > 2:
            a2 = ad.reshape(-1, ad.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            gb = a2.T @ g2
        else:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_output(out, (a, b), vjp)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return make_output(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(old),)
    )


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return make_output(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),)
    )


def concat(tensors, axis: int) -> Tensor:
    parts = [t.data for t in tensors]
    out = np.concatenate(parts, axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_output(out, tuple(tensors), vjp)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return make_output(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def elu(a: Tensor) -> Tensor:
    """Exponential linear unit with alpha = 1."""
    ad = a.data
    neg = np.expm1(np.minimum(ad, 0.0))
    out = np.where(ad > 0.0, ad, neg)

    def vjp(g):
        return (np.where(ad > 0.0, g, g * (neg + 1.0)),)

    return make_output(out, (a,), vjp)


def softmax_lastdim(a: Tensor) -> Tensor:
    """Softmax along the last axis, max-subtracted for stability."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        gs = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - gs),)

    return make_output(out, (a,), vjp)


# ---------------------------------------------------------------------------
# discrete Fourier transform (real input, O(n^2) matrix form)

_DFT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def dft_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine matrices so X[f] = (C - iS) @ x for real x."""
    cached = _DFT_CACHE.get(n)
    if cached is None:
        k = np.arange(n)
        ang = 2.0 * np.pi * np.outer(k, k) / n
        cached = (np.cos(ang), np.sin(ang))
        _DFT_CACHE[n] = cached
    return cached


def dft_complex(x: Tensor) -> tuple[Tensor, Tensor]:
    """DFT of a real sequence along axis 0; returns (real, imag) parts.

    The transform is linear, so backward falls out of the matmul adjoint.
    Accepts shape (n,) or (n, m) (m independent columns).
    """
    n = x.shape[0]
    cos_m, sin_m = dft_matrices(n)
    flat = x if x.ndim == 2 else reshape(x, (n, 1))
    re = matmul(Tensor(cos_m), flat)
    im = matmul(Tensor(-sin_m), flat)
    if x.ndim == 1:
        re = reshape(re, (n,))
        im = reshape(im, (n,))
    return re, im
