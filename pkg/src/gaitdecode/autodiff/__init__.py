"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything the decoding network needs lives here: the taped tensor type,
elementwise/matmul/reshape primitives, the layer kernels (temporal and
spatial convolutions, pooling, batch norm, dropout, attention building
blocks), the Adam optimizer with the max-norm projection, and a central
finite-difference gradient checker used as the oracle throughout the
test suite.
"""

from gaitdecode.autodiff.tensor import Tensor, backward, no_grad, grad_enabled
from gaitdecode.autodiff import ops
from gaitdecode.autodiff.ops import (
    add,
    concat,
    div,
    dft_complex,
    elu,
    exp,
    log,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    softmax_lastdim,
    sqrt,
    square,
    sub,
    sum as tsum,
    transpose,
)
from gaitdecode.autodiff.kernels import (
    BatchNormState,
    avg_pool,
    batch_norm,
    conv_1xk_same,
    depthwise_spatial_conv,
    dropout,
    linear,
    max_pool,
)
from gaitdecode.autodiff.optim import AdamState, adam_step, apply_max_norm
from gaitdecode.autodiff.gradcheck import finite_difference_check

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "grad_enabled",
    "ops",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "square",
    "mean",
    "tsum",
    "relu",
    "elu",
    "softmax_lastdim",
    "reshape",
    "transpose",
    "concat",
    "dft_complex",
    "conv_1xk_same",
    "depthwise_spatial_conv",
    "avg_pool",
    "max_pool",
    "batch_norm",
    "BatchNormState",
    "dropout",
    "linear",
    "AdamState",
    "adam_step",
    "apply_max_norm",
    "finite_difference_check",
]
