"""The gait-decoding network.

Stage chain (batch B, channels C, window T, temporal filters F):

    (B,C,T) --local temporal conv--> (B,F,C,T)
            --graph reshape + GCN pyramid + residual--> (B,F,C,T)
            --spatial collapse + pool--> (B,F,1,T/3)
            --three fusion conv blocks--> (B,200,1,T/81)
            --multi-head self-attention + residual--> (B,200,T/81)
            --concat with attention input, constrained conv--> (B,6)

Parameters are float64 tensors keyed by stable path strings; checkpoints
round-trip bit-exactly through base64-encoded little-endian buffers.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from gaitdecode import debug
from gaitdecode.autodiff import ops
from gaitdecode.autodiff.kernels import (
    BatchNormState,
    avg_pool,
    batch_norm,
    conv_1xk_same,
    conv_time_valid,
    depthwise_spatial_conv,
    dropout,
    max_pool,
    pad_time,
    same_pad_amounts,
)
from gaitdecode.autodiff.optim import apply_max_norm
from gaitdecode.autodiff.tensor import Tensor
from gaitdecode.errors import ConfigurationError, ShapeError
from gaitdecode.graph import (
    GcnBranch,
    build_prior_adjacency,
    gcm_reshape,
    gcm_reshape_inverse,
    hgp_forward,
    preprocess_prior,
)
from gaitdecode.montage import ElectrodeLayout


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are the full-scale network."""

    n_channels: int = 59
    window: int = 243
    temporal_filters: int = 25
    ltl_kernel: int = 10
    gsl_pool: int = 3
    fusion_filters: tuple = (50, 100, 200)
    fusion_kernel: int = 10
    fusion_pool: int = 3
    dropout: float = 0.5
    hgp_depths: tuple = (1, 2)
    attn_heads: int = 4
    attn_dim: int = 50
    n_joints: int = 6
    max_norm: float = 0.25
    adjacency_radius_mm: float = 30.0
    use_hgp: bool = True  # ablation switch: skip the GCN pyramid entirely

    def __post_init__(self):
        pool_total = self.gsl_pool * self.fusion_pool ** len(self.fusion_filters)
        if self.window % pool_total != 0:
            raise ConfigurationError(
                f"window {self.window} must be divisible by the pooling chain "
                f"({pool_total})"
            )
        if self.attn_heads * self.attn_dim != self.fusion_filters[-1]:
            raise ConfigurationError(
                f"attn_heads*attn_dim ({self.attn_heads}*{self.attn_dim}) must equal "
                f"the final fusion width {self.fusion_filters[-1]}"
            )
        if list(self.fusion_filters) != sorted(set(self.fusion_filters)):
            raise ConfigurationError("fusion_filters must be strictly increasing")
        if self.window < self.ltl_kernel:
            raise ConfigurationError(
                f"window {self.window} shorter than temporal kernel {self.ltl_kernel}"
            )

    @property
    def n_tokens(self) -> int:
        return self.window // (self.gsl_pool * self.fusion_pool ** len(self.fusion_filters))

    @property
    def embed_dim(self) -> int:
        return self.fusion_filters[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fusion_filters"] = list(self.fusion_filters)
        d["hgp_depths"] = list(self.hgp_depths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["fusion_filters"] = tuple(d["fusion_filters"])
        d["hgp_depths"] = tuple(d["hgp_depths"])
        return cls(**d)

    @classmethod
    def tiny(cls) -> "ModelConfig":
        """Reduced configuration used by the gradient-check suite."""
        return cls(
            n_channels=8,
            window=81,
            temporal_filters=4,
            fusion_filters=(8, 16, 32),
            attn_heads=2,
            attn_dim=16,
        )


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class GaitGraphNet:
    """Differentiable gait decoder over one electrode layout."""

    def __init__(self, config: ModelConfig, layout: ElectrodeLayout, rng: np.random.Generator):
        if layout.n_channels != config.n_channels:
            raise ConfigurationError(
                f"layout has {layout.n_channels} channels, config expects {config.n_channels}"
            )
        self.config = config
        self.layout = layout
        c, f, k = config.n_channels, config.temporal_filters, config.ltl_kernel

        self.ltl_kernels = _uniform(rng, k, (f, 1, 1, k))
        self.ltl_bias = Tensor(np.zeros(f), requires_grad=True)

        if config.use_hgp:
            prior = preprocess_prior(
                build_prior_adjacency(layout, config.adjacency_radius_mm)
            )
            self.branches = [
                GcnBranch.create(prior, depth, f, rng) for depth in config.hgp_depths
            ]
        else:
            self.branches = []

        self.gsl_kernels = _uniform(rng, c, (f, 1, c, 1))
        self.gsl_bias = Tensor(np.zeros(f), requires_grad=True)
        self.gsl_gamma = Tensor(np.ones(f), requires_grad=True)
        self.gsl_beta = Tensor(np.zeros(f), requires_grad=True)
        self.gsl_bn = BatchNormState.create(f)

        self.fusion = []
        f_in = f
        for f_out in config.fusion_filters:
            block = {
                "conv": _uniform(rng, f_in * config.fusion_kernel, (f_out, f_in, 1, config.fusion_kernel)),
                "bias": Tensor(np.zeros(f_out), requires_grad=True),
                "gamma": Tensor(np.ones(f_out), requires_grad=True),
                "beta": Tensor(np.zeros(f_out), requires_grad=True),
                "bn": BatchNormState.create(f_out),
            }
            self.fusion.append(block)
            f_in = f_out

        e, dk = config.embed_dim, config.attn_dim
        self.heads = []
        for _ in range(config.attn_heads):
            self.heads.append(
                {
                    "Wq": _uniform(rng, e, (e, dk)),
                    "Wk": _uniform(rng, e, (e, dk)),
                    "Wv": _uniform(rng, e, (e, dk)),
                    "bq": Tensor(np.zeros(dk), requires_grad=True),
                    "bk": Tensor(np.zeros(dk), requires_grad=True),
                    "bv": Tensor(np.zeros(dk), requires_grad=True),
                }
            )
        self.gtl_out_w = _uniform(rng, e, (e, e))
        self.gtl_out_b = Tensor(np.zeros(e), requires_grad=True)

        width = 2 * config.n_tokens
        self.output_kernels = _uniform(rng, e * width, (config.n_joints, e, 1, width))
        self.output_bias = Tensor(np.zeros(config.n_joints), requires_grad=True)

    # ------------------------------------------------------------------
    # parameter bookkeeping

    def parameters(self) -> dict[str, Tensor]:
        params = {
            "ltl.kernels": self.ltl_kernels,
            "ltl.bias": self.ltl_bias,
        }
        for i, branch in enumerate(self.branches):
            params[f"hgp.branch{i}.adj"] = branch.adjacency
            for l, (w, b) in enumerate(zip(branch.weights, branch.biases)):
                params[f"hgp.branch{i}.layer{l}.W"] = w
                params[f"hgp.branch{i}.layer{l}.b"] = b
        params.update(
            {
                "gsl.depthwise": self.gsl_kernels,
                "gsl.bias": self.gsl_bias,
                "gsl.bn.gamma": self.gsl_gamma,
                "gsl.bn.beta": self.gsl_beta,
            }
        )
        for i, block in enumerate(self.fusion):
            params[f"fusion.block{i}.conv"] = block["conv"]
            params[f"fusion.block{i}.bias"] = block["bias"]
            params[f"fusion.block{i}.bn.gamma"] = block["gamma"]
            params[f"fusion.block{i}.bn.beta"] = block["beta"]
        for i, head in enumerate(self.heads):
            for key in ("Wq", "Wk", "Wv", "bq", "bk", "bv"):
                params[f"gtl.head{i}.{key}"] = head[key]
        params["gtl.out.W"] = self.gtl_out_w
        params["gtl.out.b"] = self.gtl_out_b
        params["output.conv"] = self.output_kernels
        params["output.bias"] = self.output_bias
        return params

    def bn_states(self) -> dict[str, BatchNormState]:
        states = {"gsl.bn": self.gsl_bn}
        for i, block in enumerate(self.fusion):
            states[f"fusion.block{i}.bn"] = block["bn"]
        return states

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def clamp_output_norm(self) -> None:
        """Max-norm projection of the output kernels; call after each step."""
        apply_max_norm(self.output_kernels, self.config.max_norm)

    # ------------------------------------------------------------------
    # stages

    def ltl_forward(self, x: Tensor) -> Tensor:
        """(B,C,T) -> (B,F,C,T) temporal feature maps."""
        b, c, t = x.shape
        if t < self.config.ltl_kernel:
            raise ConfigurationError(
                f"window {t} shorter than temporal kernel {self.config.ltl_kernel}"
            )
        x4 = ops.reshape(x, (b, 1, c, t))
        return conv_1xk_same(x4, self.ltl_kernels, self.ltl_bias)

    def gsl_forward(self, x: Tensor, mode: str, rng) -> Tensor:
        """(B,F,C,T) -> (B,F,1,T/gsl_pool) global spatial collapse."""
        h = depthwise_spatial_conv(x, self.gsl_kernels, self.gsl_bias)
        h = batch_norm(h, self.gsl_gamma, self.gsl_beta, self.gsl_bn, mode)
        h = ops.elu(h)
        h = dropout(h, self.config.dropout, mode, rng)
        return avg_pool(h, self.config.gsl_pool)

    def fusion_forward(self, x: Tensor, mode: str, rng) -> Tensor:
        """(B,F,1,T/3) -> (B,E,1,T/81) through three conv blocks.

        Block order: dropout, explicit zero-padding, convolution, batch
        norm, ELU, max-pool. Padding is a separate stage so the last
        block's kernel may be wider than its shrunken time extent.
        """
        left, right = same_pad_amounts(self.config.fusion_kernel)
        h = x
        for block in self.fusion:
            h = dropout(h, self.config.dropout, mode, rng)
            h = pad_time(h, left, right)
            h = conv_time_valid(h, block["conv"], block["bias"])
            h = batch_norm(h, block["gamma"], block["beta"], block["bn"], mode)
            h = ops.elu(h)
            h = max_pool(h, self.config.fusion_pool)
        return dropout(h, self.config.dropout, mode, rng)

    def gtl_forward(self, x: Tensor) -> Tensor:
        """(B,E,n) -> (B,E,n) multi-head self-attention with residual."""
        e = self.config.embed_dim
        if x.shape[-2] != e:
            raise ShapeError(f"expected embedding width {e}, got {x.shape[-2]}")
        tokens = ops.transpose(x, (0, 2, 1))  # (B, n, E)
        scale = 1.0 / np.sqrt(self.config.attn_dim)
        head_outs = []
        for head in self.heads:
            q = ops.add(ops.matmul(tokens, head["Wq"]), head["bq"])
            k = ops.add(ops.matmul(tokens, head["Wk"]), head["bk"])
            v = ops.add(ops.matmul(tokens, head["Wv"]), head["bv"])
            scores = ops.mul(
                ops.matmul(q, ops.transpose(k, (0, 2, 1))), ops.as_tensor(scale)
            )
            attn = ops.softmax_lastdim(scores)
            head_outs.append(ops.matmul(attn, v))
        merged = ops.concat(head_outs, axis=-1)
        projected = ops.add(ops.matmul(merged, self.gtl_out_w), self.gtl_out_b)
        return ops.add(x, ops.transpose(projected, (0, 2, 1)))

    def output_forward(self, gtl_out: Tensor, fusion_out: Tensor) -> Tensor:
        """Concat along time, full-width constrained conv -> (B, d_J)."""
        if gtl_out.shape != fusion_out.shape:
            raise ShapeError(
                f"output inputs differ: {gtl_out.shape} vs {fusion_out.shape}"
            )
        b = gtl_out.shape[0]
        e = self.config.embed_dim
        width = 2 * self.config.n_tokens
        merged = ops.concat([gtl_out, fusion_out], axis=-1)  # (B, E, 2n)
        flat = ops.reshape(merged, (b, e * width))
        kflat = ops.reshape(self.output_kernels, (self.config.n_joints, e * width))
        return ops.add(ops.matmul(flat, ops.transpose(kflat, (1, 0))), self.output_bias)

    def forward(self, x: Tensor, mode: str = "train", rng=None, trace: list | None = None) -> Tensor:
        """Full pass (B,C,T) -> (B,d_J); deterministic in eval mode."""
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.n_channels or x.shape[2] != cfg.window:
            raise ShapeError(
                f"expected (B, {cfg.n_channels}, {cfg.window}), got {x.shape}"
            )
        if mode == "train" and rng is None:
            raise ConfigurationError("train mode needs an RNG for dropout")

        def note(stage, t):
            if trace is not None:
                trace.append((stage, t.shape[1:]))
            if debug.enabled():
                debug.check_stage(stage, t)
            return t

        h = note("ltl", self.ltl_forward(x))
        if self.branches:
            graphs = gcm_reshape(h)
            graphs = hgp_forward(graphs, self.branches)
            h = note("hgp", gcm_reshape_inverse(graphs))
        h = note("gsl", self.gsl_forward(h, mode, rng))
        h = note("fusion", self.fusion_forward(h, mode, rng))
        b = h.shape[0]
        seq = ops.reshape(h, (b, cfg.embed_dim, cfg.n_tokens))
        gtl = note("gtl", self.gtl_forward(seq))
        out = note("output", self.output_forward(gtl, seq))
        return out

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode inference over (N,C,T) without building graphs."""
        from gaitdecode.autodiff.tensor import no_grad

        outs = []
        with no_grad():
            for start in range(0, x.shape[0], batch_size):
                chunk = Tensor(x[start : start + batch_size])
                outs.append(self.forward(chunk, mode="eval").data)
        return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------------------
# checkpoint I/O

_FORMAT = "gaitdecode-checkpoint-v1"


def _encode(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])


def checkpoint_payload(model: GaitGraphNet) -> dict:
    params = {path: _encode(p.data) for path, p in model.parameters().items()}
    state = {}
    for path, bn in model.bn_states().items():
        state[f"{path}.running_mean"] = _encode(bn.running_mean)
        state[f"{path}.running_var"] = _encode(bn.running_var)
    return {
        "format": _FORMAT,
        "config": model.config.to_dict(),
        "channel_names": list(model.layout.names),
        "params": params,
        "state": state,
    }


def save_checkpoint(model: GaitGraphNet, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_payload(model), sort_keys=True))


def restore_into(model: GaitGraphNet, payload: dict) -> None:
    params = model.parameters()
    for key, entry in payload["params"].items():
        params[key].data[...] = _decode(entry)
    for path, bn in model.bn_states().items():
        bn.running_mean[...] = _decode(payload["state"][f"{path}.running_mean"])
        bn.running_var[...] = _decode(payload["state"][f"{path}.running_var"])


def load_checkpoint(path, layout: ElectrodeLayout) -> GaitGraphNet:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != _FORMAT:
        raise ConfigurationError(f"{path}: not a recognised checkpoint")
    if list(layout.names) != payload["channel_names"]:
        raise ConfigurationError(
            f"{path}: checkpoint channels do not match the provided layout"
        )
    config = ModelConfig.from_dict(payload["config"])
    model = GaitGraphNet(config, layout, np.random.default_rng(0))
    restore_into(model, payload)
    return model
