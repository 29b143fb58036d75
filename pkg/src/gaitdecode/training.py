"""Training loop with early stopping on validation correlation, metrics,
the ridge-regression floor, and the one-tailed paired t-test.

Mini-batches are temporally contiguous window runs from a single trial;
only the batch order is shuffled each epoch. That keeps the frequency
loss's batch axis a genuine time series (the load-bearing batching
contract) while still decorrelating updates.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from gaitdecode.autodiff.optim import AdamState, adam_step
from gaitdecode.autodiff.tensor import Tensor, backward
from gaitdecode.errors import (
    ConfigurationError,
    DegenerateTestError,
    MetricUndefinedError,
    NonFiniteError,
    ShapeError,
)
from gaitdecode.losses import LossConfig, htsr_total
from gaitdecode.model import GaitGraphNet, checkpoint_payload, restore_into
from gaitdecode.signal_prep import JOINT_NAMES, TrialRecord


# ---------------------------------------------------------------------------
# metrics


def pearson_r(y: np.ndarray, yhat: np.ndarray) -> float:
    """Population covariance over the product of population deviations."""
    if y.shape != yhat.shape or y.ndim != 1:
        raise ShapeError(f"metric inputs must be equal-length vectors, got {y.shape} vs {yhat.shape}")
    if y.size < 2:
        raise MetricUndefinedError("pearson r needs at least 2 samples")
    # ptp is exact for constant inputs; std picks up summation rounding
    if np.ptp(y) == 0.0 or np.ptp(yhat) == 0.0:
        raise MetricUndefinedError("pearson r undefined for zero-variance input")
    cov = ((y - y.mean()) * (yhat - yhat.mean())).mean()
    return float(cov / (y.std() * yhat.std()))


def r2_score(y: np.ndarray, yhat: np.ndarray) -> float:
    """1 - SSres/SStot; negative when worse than the mean predictor."""
    if y.shape != yhat.shape or y.ndim != 1:
        raise ShapeError(f"metric inputs must be equal-length vectors, got {y.shape} vs {yhat.shape}")
    if y.size < 2:
        raise MetricUndefinedError("r2 needs at least 2 samples")
    if np.ptp(y) == 0.0:
        raise MetricUndefinedError("r2 undefined for zero target variance")
    ss_tot = ((y - y.mean()) ** 2).sum()
    ss_res = ((y - yhat) ** 2).sum()
    return float(1.0 - ss_res / ss_tot)


def mae(y: np.ndarray, yhat: np.ndarray) -> float:
    if y.shape != yhat.shape:
        raise ShapeError(f"metric inputs must match, got {y.shape} vs {yhat.shape}")
    return float(np.abs(y - yhat).mean())


@dataclass
class MetricsReport:
    """Per-joint and joint-averaged r / R^2 / MAE plus run metadata."""

    per_joint: dict
    mean: dict
    std: dict
    undefined_joints: list
    meta: dict = field(default_factory=dict)

    def to_json(self, include_volatile: bool = True) -> str:
        payload = {
            "per_joint": self.per_joint,
            "mean": self.mean,
            "std": self.std,
            "undefined_joints": self.undefined_joints,
            "meta": dict(self.meta),
        }
        if not include_volatile:
            payload["meta"].pop("wall_clock_s", None)
        return json.dumps(payload, sort_keys=True)

    @property
    def mean_r(self) -> float:
        return self.mean["r"]


def metrics_from_predictions(targets: np.ndarray, preds: np.ndarray, meta: dict | None = None) -> MetricsReport:
    """Per-joint metrics on concatenated (N, 6) sequences, averaged across joints."""
    if targets.shape != preds.shape or targets.ndim != 2:
        raise ShapeError(f"expected matching (N, 6) arrays, got {targets.shape} vs {preds.shape}")
    per_joint = {}
    undefined = []
    for j, name in enumerate(JOINT_NAMES):
        entry = {}
        try:
            entry["r"] = pearson_r(targets[:, j], preds[:, j])
        except MetricUndefinedError:
            entry["r"] = None
            undefined.append(name)
        try:
            entry["r2"] = r2_score(targets[:, j], preds[:, j])
        except MetricUndefinedError:
            entry["r2"] = None
            if name not in undefined:
                undefined.append(name)
        entry["mae"] = mae(targets[:, j], preds[:, j])
        per_joint[name] = entry

    def agg(key):
        vals = [e[key] for e in per_joint.values() if e[key] is not None]
        if not vals:
            return None, None
        return float(np.mean(vals)), float(np.std(vals))

    mean_r, std_r = agg("r")
    mean_r2, std_r2 = agg("r2")
    mean_mae, std_mae = agg("mae")
    return MetricsReport(
        per_joint=per_joint,
        mean={"r": mean_r, "r2": mean_r2, "mae": mean_mae},
        std={"r": std_r, "r2": std_r2, "mae": std_mae},
        undefined_joints=undefined,
        meta=meta or {},
    )


# ---------------------------------------------------------------------------
# window assembly


@dataclass
class WindowArrays:
    """Materialised windows of one trial, in time order."""

    x: np.ndarray  # (n, C, T)
    y: np.ndarray  # (n, 6)


def trial_windows(trial: TrialRecord, window: int, stride: int) -> WindowArrays | None:
    t = trial.n_samples
    if window > t:
        return None
    view = np.lib.stride_tricks.sliding_window_view(trial.eeg, window, axis=1)
    x = np.ascontiguousarray(view[:, ::stride].transpose(1, 0, 2))
    y = trial.joints[:, window - 1 :: stride].T.copy()
    n = min(x.shape[0], y.shape[0])
    return WindowArrays(x=x[:n], y=y[:n])


def assemble_windows(trials: list[TrialRecord], window: int, stride: int) -> list[WindowArrays]:
    out = []
    for tr in trials:
        wa = trial_windows(tr, window, stride)
        if wa is not None and wa.x.shape[0] > 0:
            out.append(wa)
    return out


def stack_windows(arrays: list[WindowArrays]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.concatenate([w.x for w in arrays], axis=0),
        np.concatenate([w.y for w in arrays], axis=0),
    )


def contiguous_batches(arrays: list[WindowArrays], batch_size: int) -> list[tuple[int, slice]]:
    """Chunk each trial's window run into consecutive batches.

    Returns (trial index, slice) descriptors; runt batches below 2 samples
    are dropped (batch norm needs at least 2).
    """
    batches = []
    for ti, wa in enumerate(arrays):
        n = wa.x.shape[0]
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            if stop - start >= 2:
                batches.append((ti, slice(start, stop)))
    return batches


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 100
    max_epochs: int = 50
    patience: int = 30
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    window: int = 243
    stride: int = 1
    contiguous_batches: bool = True

    def __post_init__(self):
        if self.patience > self.max_epochs:
            raise ConfigurationError(
                f"patience {self.patience} must not exceed max_epochs {self.max_epochs}"
            )
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.loss.use_freq and not self.contiguous_batches:
            raise ConfigurationError(
                "the frequency loss needs temporally contiguous batches"
            )


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_r: float
    epochs_run: int
    best_checkpoint: dict
    aborted_reason: str | None = None


def validation_r(model: GaitGraphNet, val_arrays: list[WindowArrays]) -> float:
    """Joint-averaged validation r; undefined joints count as 0 here.

    Checkpoint selection needs a total order every epoch, so an
    early-training constant output must not blow up the loop; the proper
    evaluation path still reports undefined metrics explicitly.
    """
    x, y = stack_windows(val_arrays)
    preds = model.predict(x)
    rs = []
    for j in range(y.shape[1]):
        try:
            rs.append(pearson_r(y[:, j], preds[:, j]))
        except MetricUndefinedError:
            rs.append(0.0)
    return float(np.mean(rs))


def train(
    model: GaitGraphNet,
    train_trials: list[TrialRecord],
    val_trials: list[TrialRecord],
    cfg: TrainConfig,
    log_path=None,
    val_metric_fn=None,
) -> TrainResult:
    """Adam + max-norm training with best-checkpoint early stopping.

    Stops when validation r has not improved for ``patience`` consecutive
    epochs (or at ``max_epochs``) and restores the best checkpoint into
    the model. ``val_metric_fn`` overrides the validation metric (test
    seam for the scripted early-stopping runs).
    """
    train_arrays = assemble_windows(train_trials, cfg.window, cfg.stride)
    val_arrays = assemble_windows(val_trials, cfg.window, cfg.stride)
    if not train_arrays or (not val_arrays and val_metric_fn is None):
        raise ConfigurationError("training and validation splits must be non-empty")
    batches = contiguous_batches(train_arrays, cfg.batch_size)
    if not batches:
        raise ConfigurationError("no usable training batches")

    root = np.random.default_rng(cfg.seed)
    shuffle_rng = np.random.default_rng(root.integers(2**63))
    dropout_rng = np.random.default_rng(root.integers(2**63))
    adam = AdamState(lr=cfg.lr)
    params = model.parameters()

    log_fh = Path(log_path).open("w") if log_path else None

    def log(record):
        if log_fh:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    history = []
    best_val = -np.inf
    best_epoch = 0
    best_payload = checkpoint_payload(model)
    epochs_since_best = 0
    step = 0
    aborted = None

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            order = shuffle_rng.permutation(len(batches))
            epoch_loss = 0.0
            for bi in order:
                ti, sl = batches[bi]
                wa = train_arrays[ti]
                xb = Tensor(wa.x[sl])
                yb = Tensor(wa.y[sl])
                model.zero_grad()
                out = model.forward(xb, mode="train", rng=dropout_rng)
                breakdown = htsr_total(out, yb, cfg.loss)
                total = breakdown.total
                if not np.isfinite(total.data):
                    aborted = f"non-finite loss at step {step}"
                    break
                backward(total)
                try:
                    adam_step(params, adam)
                except NonFiniteError as exc:
                    aborted = str(exc)
                    break
                model.clamp_output_norm()
                step += 1
                epoch_loss += float(total.data)
                log(breakdown.log_record(step))
            if aborted:
                break

            if val_metric_fn is not None:
                val_r = float(val_metric_fn(model, epoch))
            else:
                val_r = validation_r(model, val_arrays)
            history.append(
                {
                    "epoch": epoch,
                    "val_r": val_r,
                    "mean_train_loss": epoch_loss / max(1, len(batches)),
                }
            )
            log({"epoch": epoch, "val_r": val_r})

            if val_r > best_val:
                best_val = val_r
                best_epoch = epoch
                best_payload = checkpoint_payload(model)
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= cfg.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()

    restore_into(model, best_payload)
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_r=float(best_val) if np.isfinite(best_val) else 0.0,
        epochs_run=len(history),
        best_checkpoint=best_payload,
        aborted_reason=aborted,
    )


def evaluate(
    model: GaitGraphNet,
    test_trials: list[TrialRecord],
    window: int,
    stride: int = 1,
    meta: dict | None = None,
    batch_size: int = 256,
) -> MetricsReport:
    """Metrics on the concatenated, time-ordered test predictions."""
    arrays = assemble_windows(test_trials, window, stride)
    if not arrays:
        raise ConfigurationError("no test windows")
    x, y = stack_windows(arrays)
    preds = model.predict(x, batch_size=batch_size)
    return metrics_from_predictions(y, preds, meta=meta)


# ---------------------------------------------------------------------------
# ridge baseline (independent performance floor)


def ridge_baseline(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    lam: float = 1.0,
) -> MetricsReport:
    """Closed-form ridge on flattened windows via the normal equations.

    Mean-centred features with an unpenalised intercept; one solve shared
    by all joints.
    """
    if lam <= 0.0:
        raise ConfigurationError(f"ridge lambda must be positive, got {lam}")
    xf = train_x.reshape(train_x.shape[0], -1)
    xt = test_x.reshape(test_x.shape[0], -1)
    mu = xf.mean(axis=0)
    ym = train_y.mean(axis=0)
    xc = xf - mu
    gram = xc.T @ xc + lam * np.eye(xc.shape[1])
    weights = np.linalg.solve(gram, xc.T @ (train_y - ym))
    preds = (xt - mu) @ weights + ym
    return metrics_from_predictions(test_y, preds, meta={"lambda": lam})


# ---------------------------------------------------------------------------
# paired one-tailed t-test


def paired_ttest_one_tailed(a, b) -> tuple[float, float]:
    """Upper-tail test of mean(a - b) > 0 on unit-matched score pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"paired scores must be equal-length vectors, got {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DegenerateTestError("paired t-test needs at least 2 pairs")
    d = a - b
    if np.all(d == 0.0):
        return 0.0, 0.5
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateTestError("zero-variance non-zero differences")
    t = float(d.mean() / (sd / np.sqrt(d.size)))
    p = float(sstats.t.sf(t, df=d.size - 1))
    return t, p
