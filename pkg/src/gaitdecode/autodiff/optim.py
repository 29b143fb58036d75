"""Adam optimizer and the per-unit max-norm weight projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gaitdecode.autodiff.tensor import Tensor
from gaitdecode.errors import NonFiniteError, ParameterError


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter path."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One Adam update over ``params`` using their ``.grad`` buffers.

    Bias correction follows the step counter, which is incremented before
    the update. NaN gradients abort with the offending parameter named.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for path, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {path!r}")
        m = state.m.get(path)
        if m is None:
            m = state.m[path] = np.zeros_like(p.data)
            state.v[path] = np.zeros_like(p.data)
        v = state.v[path]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def apply_max_norm(weight: Tensor, c: float) -> Tensor:
    """Project each output unit's weights onto the L2 ball of radius ``c``.

    Output units are the rows of the first axis. Applied in place after
    each optimizer step; idempotent and never norm-increasing.
    """
    if c <= 0.0:
        raise ParameterError(f"max norm must be positive, got {c}")
    w = weight.data
    flat = w.reshape(w.shape[0], -1)
    norms = np.sqrt((flat * flat).sum(axis=1))
    scale = np.where(norms > c, c / np.where(norms > 0.0, norms, 1.0), 1.0)
    w *= scale.reshape((-1,) + (1,) * (w.ndim - 1))
    return weight
