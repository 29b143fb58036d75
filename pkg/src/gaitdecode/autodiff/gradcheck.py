"""Central finite-difference gradient checking.

The checker is the independent oracle for every differentiable operation:
it perturbs each coordinate of each parameter by ±h, re-evaluates the
scalar function, and compares the central-difference quotient against the
analytic gradient produced by the backward sweep.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from gaitdecode.autodiff.tensor import Tensor, backward
from gaitdecode.errors import NonFiniteError


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    sample: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a zero-argument closure over ``params`` returning a scalar
    Tensor; it must be re-evaluable (any internal randomness has to be
    re-seeded by the caller inside ``f``). The relative error denominator
    is max(1, |analytic|), so tiny gradients are compared absolutely.
    Non-smooth points (ReLU kinks, pooling ties) are the caller's job to
    avoid. ``sample`` limits the check to that many randomly chosen
    coordinates per parameter.
    """
    if h <= 0.0:
        raise ValueError("step h must be positive")
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise NonFiniteError("function value is not finite")
    backward(out)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        n = p.data.size
        if sample is not None and sample < n:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = rng.choice(n, size=sample, replace=False)
        else:
            idx = np.arange(n)
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f().item()
            flat[i] = orig - h
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            if not np.isfinite(numeric):
                raise NonFiniteError("finite-difference evaluation is not finite")
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            if err > worst:
                worst = err
    return worst
