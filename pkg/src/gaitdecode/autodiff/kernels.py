"""Differentiable layer kernels built on the taped tensor type.

Shapes follow the network's internal layout: feature maps first, then the
electrode/channel axis, then time. Every kernel accepts either a single
sample or a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from gaitdecode.autodiff import ops
from gaitdecode.autodiff.tensor import Tensor, make_output
from gaitdecode.errors import ParameterError, ShapeError


def _with_batch(x: Tensor, expected_ndim: int) -> tuple[Tensor, bool]:
    """Promote an unbatched input to batch size 1."""
    if x.ndim == expected_ndim:
        return x, False
    if x.ndim == expected_ndim - 1:
        return ops.reshape(x, (1,) + x.shape), True
    raise ShapeError(f"expected {expected_ndim - 1}-D or {expected_ndim}-D input, got {x.shape}")


def pad_time(x: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last (time) axis."""
    if left < 0 or right < 0:
        raise ParameterError("padding must be non-negative")
    t_ = x.shape[-1]
    widths = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    out = np.pad(x.data, widths)

    def vjp(g):
        return (g[..., left : left + t_],)

    return make_output(out, (x,), vjp)


def conv_time_valid(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Temporal convolution, no padding: output time extent T - k + 1.

    x: (B, F_in, C, T) or (F_in, C, T); kernels: (F_out, F_in, 1, k).
    The channel axis is untouched.
    """
    xb, squeeze = _with_batch(x, 4)
    if kernels.ndim != 4 or kernels.shape[2] != 1:
        raise ShapeError(f"kernels must be (F_out, F_in, 1, k), got {kernels.shape}")
    b_, f_in, c_, t_ = xb.shape
    f_out, kf_in, _, k = kernels.shape
    if kf_in != f_in:
        raise ShapeError(f"kernel input maps {kf_in} != input feature maps {f_in}")
    if k > t_:
        raise ParameterError(f"kernel width {k} exceeds time extent {t_}")
    t_out = t_ - k + 1

    xd = xb.data
    kd = kernels.data.reshape(f_out, f_in * k)
    # (B, F_in, C, T_out, k) windows -> one GEMM over all output positions
    win = np.lib.stride_tricks.sliding_window_view(xd, k, axis=3)
    win2 = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4)).reshape(
        b_ * c_ * t_out, f_in * k
    )
    out2 = win2 @ kd.T
    out = out2.reshape(b_, c_, t_out, f_out).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b_ * c_ * t_out, f_out)
        gk = (g2.T @ win2).reshape(f_out, f_in, 1, k)
        gwin = (g2 @ kd).reshape(b_, c_, t_out, f_in, k).transpose(0, 3, 1, 2, 4)
        gx = np.zeros_like(xd)
        for s in range(k):
            gx[:, :, :, s : s + t_out] += gwin[:, :, :, :, s]
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    parents = (xb, kernels) if bias is None else (xb, kernels, bias)
    res = make_output(out, parents, vjp)
    return ops.reshape(res, res.shape[1:]) if squeeze else res


def same_pad_amounts(k: int) -> tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def conv_1xk_same(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Temporal convolution with 'same' zero padding.

    x: (B, F_in, C, T) or (F_in, C, T); kernels: (F_out, F_in, 1, k).
    The channel axis is untouched; output time extent equals the input's.
    Kernels wider than the window are rejected; layers that need a wide
    same-style convolution pad explicitly first (see fusion blocks).
    """
    k = kernels.shape[-1]
    if k > x.shape[-1]:
        raise ParameterError(f"kernel width {k} exceeds time extent {x.shape[-1]}")
    left, right = same_pad_amounts(k)
    return conv_time_valid(pad_time(x, left, right), kernels, bias)


def depthwise_spatial_conv(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Per-feature-map spatial convolution spanning all channels.

    x: (B, F, C, T) or (F, C, T); kernels: (F, 1, C, 1). Collapses the
    channel axis to 1, one spatial filter per feature map.
    """
    xb, squeeze = _with_batch(x, 4)
    b_, f_, c_, t_ = xb.shape
    if kernels.shape != (f_, 1, c_, 1):
        raise ShapeError(
            f"depthwise kernels must be ({f_}, 1, {c_}, 1), got {kernels.shape}"
        )
    kd = kernels.data.reshape(f_, c_)
    xd = xb.data
    out = np.einsum("bfct,fc->bft", xd, kd)[:, :, None, :]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g):
        g3 = g[:, :, 0, :]
        gk = np.einsum("bft,bfct->fc", g3, xd).reshape(f_, 1, c_, 1)
        gx = np.einsum("bft,fc->bfct", g3, kd)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    parents = (xb, kernels) if bias is None else (xb, kernels, bias)
    res = make_output(out, parents, vjp)
    return ops.reshape(res, res.shape[1:]) if squeeze else res


def _pool_check(width: int) -> None:
    if width <= 0:
        raise ParameterError(f"pool width must be positive, got {width}")


def avg_pool(x: Tensor, width: int) -> Tensor:
    """Non-overlapping mean pooling along the last axis; remainder dropped."""
    _pool_check(width)
    t_ = x.shape[-1]
    n = t_ // width
    lead = x.shape[:-1]
    xv = x.data[..., : n * width].reshape(lead + (n, width))
    out = xv.mean(axis=-1)

    def vjp(g):
        gx = np.zeros(x.shape)
        gx[..., : n * width] = np.repeat(g / width, width, axis=-1)
        return (gx,)

    return make_output(out, (x,), vjp)


def max_pool(x: Tensor, width: int) -> Tensor:
    """Non-overlapping max pooling; ties routed to the lowest index."""
    _pool_check(width)
    t_ = x.shape[-1]
    n = t_ // width
    lead = x.shape[:-1]
    xv = x.data[..., : n * width].reshape(lead + (n, width))
    arg = xv.argmax(axis=-1)
    out = np.take_along_axis(xv, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gv = np.zeros(lead + (n, width))
        np.put_along_axis(gv, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros(x.shape)
        gx[..., : n * width] = gv.reshape(lead + (n * width,))
        return (gx,)

    return make_output(out, (x,), vjp)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (per feature map)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(
            running_mean=np.zeros(num_features),
            running_var=np.ones(num_features),
            momentum=momentum,
            eps=eps,
        )

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            self.running_mean.copy(), self.running_var.copy(), self.momentum, self.eps
        )


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    mode: str,
) -> Tensor:
    """Normalise per feature map (axis 1) over batch and trailing axes.

    Train mode uses batch statistics (population variance) and updates the
    running stats in place; eval mode normalises with the running stats.
    """
    if x.ndim < 2:
        raise ShapeError(f"batch_norm input must be at least 2-D, got {x.shape}")
    f_ = x.shape[1]
    bshape = (1, f_) + (1,) * (x.ndim - 2)
    axes = (0,) + tuple(range(2, x.ndim))
    if mode == "train":
        if x.shape[0] < 2:
            raise ParameterError("batch_norm train mode needs batch size >= 2")
        mu = ops.mean(x, axis=axes, keepdims=True)
        xc = ops.sub(x, mu)
        var = ops.mean(ops.square(xc), axis=axes, keepdims=True)
        denom = ops.sqrt(ops.add(var, Tensor(np.full(var.shape, state.eps))))
        xhat = ops.div(xc, denom)
        m = state.momentum
        state.running_mean *= 1.0 - m
        state.running_mean += m * mu.data.reshape(f_)
        state.running_var *= 1.0 - m
        state.running_var += m * var.data.reshape(f_)
    elif mode == "eval":
        rm = state.running_mean.reshape(bshape)
        rv = state.running_var.reshape(bshape)
        scale = 1.0 / np.sqrt(rv + state.eps)
        xhat = ops.mul(ops.sub(x, Tensor(rm)), Tensor(scale))
    else:
        raise ParameterError(f"unknown batch_norm mode {mode!r}")
    g_r = ops.reshape(gamma, bshape)
    b_r = ops.reshape(beta, bshape)
    return ops.add(ops.mul(xhat, g_r), b_r)


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: train-time scaling by 1/(1-p); eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if mode != "train":
        raise ParameterError(f"unknown dropout mode {mode!r}")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_output(x.data * mask, (x,), lambda g: (g * mask,))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map on the last axis: x @ W (+ b)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"linear input extent {x.shape[-1]} != weight rows {weight.shape[0]}"
        )
    flat = x if x.ndim >= 2 else ops.reshape(x, (1, x.shape[0]))
    out = ops.matmul(flat, weight)
    if bias is not None:
        out = ops.add(out, bias)
    return ops.reshape(out, out.shape[1:]) if x.ndim == 1 else out
