"""Electrode-graph machinery.

Builds the distance prior over electrodes, normalises (learnable)
adjacency matrices with the isolated-node mask, and stacks graph
convolutions into parallel branches of increasing depth whose summed
output rides on a residual connection.

Adjacency normalisation is recomputed inside every forward pass so the
gradient with respect to the raw learnable adjacency is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gaitdecode.autodiff import ops
from gaitdecode.autodiff.tensor import Tensor, make_output
from gaitdecode.errors import ConfigurationError, ShapeError
from gaitdecode.montage import ElectrodeLayout


class Diagnostics:
    """Counters for numerically clamped paths (negative adjacency rows)."""

    def __init__(self):
        self.negative_row_sums = 0

    def reset(self):
        self.negative_row_sums = 0


diagnostics = Diagnostics()


def build_prior_adjacency(layout: ElectrodeLayout, radius_mm: float = 30.0) -> np.ndarray:
    """0/1 connectivity: edge iff inter-electrode distance < radius (strict).

    Diagonal stays zero; self-loops are added by :func:`preprocess_prior`.
    Duplicate positions (distance 0) connect and trigger a warning.
    """
    if radius_mm <= 0:
        raise ConfigurationError(f"radius must be positive, got {radius_mm}")
    d = layout.pairwise_distances()
    off = ~np.eye(layout.n_channels, dtype=bool)
    if np.any((d == 0.0) & off):
        import warnings

        warnings.warn("duplicate electrode positions: zero distance connects them")
    return ((d < radius_mm) & off).astype(float)


def preprocess_prior(a_prior: np.ndarray) -> np.ndarray:
    """Symmetrise, rectify and add self-loops: relu(A + A^T) + I."""
    if a_prior.ndim != 2 or a_prior.shape[0] != a_prior.shape[1]:
        raise ShapeError(f"prior adjacency must be square, got {a_prior.shape}")
    return np.maximum(a_prior + a_prior.T, 0.0) + np.eye(a_prior.shape[0])


def _clamped_degrees(rowsum: Tensor) -> Tensor:
    """Degree vector with the mask path: non-positive row sums become 1.

    Zero rows are the isolated-node mask from the construction; strictly
    negative rows (possible for the unconstrained learnable adjacency) are
    clamped onto the same path and counted in :data:`diagnostics`.
    """
    r = rowsum.data
    negative = int((r < 0.0).sum())
    if negative:
        diagnostics.negative_row_sums += negative
    positive = r > 0.0
    out = np.where(positive, r, 1.0)
    return make_output(out, (rowsum,), lambda g: (g * positive,))


def normalize_adjacency(adjacency: Tensor) -> Tensor:
    """Symmetric normalisation D^{-1/2} A D^{-1/2} with isolated-node mask."""
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ShapeError(f"adjacency must be square, got {adjacency.shape}")
    c = adjacency.shape[0]
    rowsum = ops.sum(adjacency, axis=1)
    dinv_sqrt = ops.powi(_clamped_degrees(rowsum), -0.5)
    left = ops.reshape(dinv_sqrt, (c, 1))
    right = ops.reshape(dinv_sqrt, (1, c))
    return ops.mul(adjacency, ops.mul(left, right))


def gcn_layer(h: Tensor, a_norm: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Graph convolution relu(A_norm @ H @ W + b) over node features.

    ``h`` is (..., C, F) with any number of leading graph axes; the
    normalised adjacency is shared across them.
    """
    if h.shape[-2] != a_norm.shape[0]:
        raise ShapeError(
            f"node count {h.shape[-2]} != adjacency size {a_norm.shape[0]}"
        )
    if h.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"feature width {h.shape[-1]} != weight rows {weight.shape[0]}"
        )
    return ops.relu(ops.add(ops.matmul(ops.matmul(a_norm, h), weight), bias))


@dataclass
class GcnBranch:
    """One pyramid branch: its own learnable adjacency + stacked layers."""

    adjacency: Tensor
    weights: list[Tensor]
    biases: list[Tensor]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @classmethod
    def create(cls, prior: np.ndarray, depth: int, width: int, rng: np.random.Generator):
        if depth < 1:
            raise ConfigurationError(f"branch depth must be >= 1, got {depth}")
        bound = 1.0 / np.sqrt(width)
        weights = [
            Tensor(rng.uniform(-bound, bound, size=(width, width)), requires_grad=True)
            for _ in range(depth)
        ]
        biases = [Tensor(np.zeros(width), requires_grad=True) for _ in range(depth)]
        return cls(Tensor(prior.copy(), requires_grad=True), weights, biases)

    def forward(self, h: Tensor) -> Tensor:
        a_norm = normalize_adjacency(self.adjacency)
        out = h
        for w, b in zip(self.weights, self.biases):
            out = gcn_layer(out, a_norm, w, b)
        return out


def hgp_forward(graphs: Tensor, branches: list[GcnBranch]) -> Tensor:
    """Parallel GCN branches of strictly increasing depth, summed, plus a
    residual of the input. Output shape equals input shape."""
    depths = [b.depth for b in branches]
    if any(d2 <= d1 for d1, d2 in zip(depths, depths[1:])):
        raise ConfigurationError(f"branch depths must strictly increase, got {depths}")
    width = graphs.shape[-1]
    for b in branches:
        if b.weights[0].shape[0] != width:
            raise ConfigurationError(
                f"branch feature width {b.weights[0].shape[0]} != input width {width}"
            )
    out = graphs
    for b in branches:
        out = ops.add(out, b.forward(graphs))
    return out


def gcm_reshape(x: Tensor) -> Tensor:
    """(..., F, C, T) -> (..., T, C, F): one temporal graph per time step."""
    if x.ndim == 3:
        return ops.transpose(x, (2, 1, 0))
    if x.ndim == 4:
        return ops.transpose(x, (0, 3, 2, 1))
    raise ShapeError(f"expected 3-D or 4-D input, got {x.shape}")


def gcm_reshape_inverse(x: Tensor) -> Tensor:
    """Inverse axis permutation; bit-exact round trip."""
    return gcm_reshape(x)


def adjacency_to_csv(matrix: np.ndarray, path, names=None) -> None:
    """Dense CSV export for inspection (optional header of node names)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if names is not None:
            writer.writerow(names)
        for row in matrix:
            writer.writerow([f"{v:.12g}" for v in row])


def adjacency_from_csv(path, has_header: bool = False) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if has_header:
        rows = rows[1:]
    return np.array([[float(v) for v in row] for row in rows])
