"""Desk-scale synthetic benchmark: 16 channels, 8 minutes of walking.

This is the stand-in for real recordings: three 8-trial blocks of
synthetic gait EEG, the standard preprocessing chain, a block-structured
split, and a scaled-down network. Everything is a pure function of the
seed, so ablations can pair runs seed by seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from gaitdecode.datagen import SynthSpec, SplitResult, split_ged, synth_generate
from gaitdecode.losses import LossConfig
from gaitdecode.model import GaitGraphNet, ModelConfig
from gaitdecode.montage import ElectrodeLayout, benchmark_layout
from gaitdecode.signal_prep import PrepConfig, preprocess_trial
from gaitdecode.training import (
    MetricsReport,
    TrainConfig,
    TrainResult,
    assemble_windows,
    evaluate,
    ridge_baseline,
    stack_windows,
    train,
)

BENCHMARK_WINDOW = 81
BENCHMARK_STRIDE = 5


def benchmark_synth_spec(seed: int, layout: ElectrodeLayout | None = None) -> SynthSpec:
    """16-channel, 3x8x20 s session at the default signal-to-noise level."""
    layout = layout or benchmark_layout()
    return SynthSpec(
        channel_names=layout.names,
        fs=1000.0,
        gait_freq_hz=1.0,
        n_blocks=3,
        trials_per_block=8,
        trial_seconds=20.0,
        source_gain=1.0,
        pink_amp=3.0,
        rhythm_amp=3.0,
        white_std=12.0,
        neural_lead_ms=100.0,
        seed=seed,
    )


def benchmark_model_config(use_hgp: bool = True) -> ModelConfig:
    """Scaled-down network sized for the 16-channel benchmark."""
    return ModelConfig(
        n_channels=16,
        window=BENCHMARK_WINDOW,
        temporal_filters=8,
        fusion_filters=(16, 32, 64),
        attn_heads=2,
        attn_dim=32,
        use_hgp=use_hgp,
    )


def benchmark_train_config(seed: int, loss_mode: str = "htsr", max_epochs: int = 8) -> TrainConfig:
    return TrainConfig(
        lr=0.001,
        batch_size=100,
        max_epochs=max_epochs,
        patience=max_epochs,
        seed=seed,
        loss=LossConfig.for_mode(loss_mode),
        window=BENCHMARK_WINDOW,
        stride=BENCHMARK_STRIDE,
    )


def prepare_benchmark_splits(
    seed: int, layout: ElectrodeLayout | None = None
) -> SplitResult:
    """Generate, preprocess (to 100 Hz), and split the synthetic session."""
    layout = layout or benchmark_layout()
    spec = benchmark_synth_spec(seed, layout)
    prep = PrepConfig()
    trials = [preprocess_trial(t, layout, prep) for t in synth_generate(spec)]
    return split_ged(trials)


@dataclass
class BenchmarkRun:
    seed: int
    loss_mode: str
    use_hgp: bool
    report: MetricsReport
    train_result: TrainResult
    model: GaitGraphNet
    splits: SplitResult
    wall_clock_s: float
    log_path: str | None = None


def run_benchmark(
    seed: int,
    loss_mode: str = "htsr",
    use_hgp: bool = True,
    max_epochs: int = 8,
    splits: SplitResult | None = None,
    layout: ElectrodeLayout | None = None,
    log_path=None,
) -> BenchmarkRun:
    """Train and evaluate one benchmark model; pure function of the seed."""
    layout = layout or benchmark_layout()
    if splits is None:
        splits = prepare_benchmark_splits(seed, layout)
    started = time.perf_counter()
    model = GaitGraphNet(
        benchmark_model_config(use_hgp), layout, np.random.default_rng(seed)
    )
    cfg = benchmark_train_config(seed, loss_mode, max_epochs)
    result = train(model, splits.train, splits.val, cfg, log_path=log_path)
    report = evaluate(
        model,
        splits.test,
        window=cfg.window,
        stride=cfg.stride,
        meta={
            "seed": seed,
            "loss_mode": loss_mode,
            "use_hgp": use_hgp,
            "epochs_run": result.epochs_run,
            "best_epoch": result.best_epoch,
            "val_history": [h["val_r"] for h in result.history],
        },
    )
    elapsed = time.perf_counter() - started
    report.meta["wall_clock_s"] = elapsed
    return BenchmarkRun(
        seed=seed,
        loss_mode=loss_mode,
        use_hgp=use_hgp,
        report=report,
        train_result=result,
        model=model,
        splits=splits,
        wall_clock_s=elapsed,
        log_path=str(log_path) if log_path else None,
    )


def run_ridge_floor(splits: SplitResult, lam: float = 1.0) -> MetricsReport:
    """The closed-form linear floor on the same windows the network sees."""
    train_x, train_y = stack_windows(
        assemble_windows(splits.train, BENCHMARK_WINDOW, BENCHMARK_STRIDE)
    )
    test_x, test_y = stack_windows(
        assemble_windows(splits.test, BENCHMARK_WINDOW, BENCHMARK_STRIDE)
    )
    return ridge_baseline(train_x, train_y, test_x, test_y, lam=lam)
