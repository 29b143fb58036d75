"""EEG preprocessing chain.

Fixed stage order: causal band-pass -> common average reference ->
downsample -> surface Laplacian -> sliding-window segmentation. Every
stage preserves the channel count and the EEG/joint time alignment, and
none of them uses randomness.

The band-pass is a causal Butterworth cascade (scipy ``butter`` N=4,
second-order sections, forward pass only): no future samples leak into
the output, which is the property that matters for online decoding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

from gaitdecode.errors import ConfigurationError, ParameterError
from gaitdecode.montage import ElectrodeLayout

JOINT_NAMES = ("lhip", "lknee", "lankle", "rhip", "rknee", "rankle")
N_JOINTS = 6


@dataclass
class TrialRecord:
    """One walking trial: EEG (C x t, microvolts) + joint angles (6 x t, degrees)."""

    eeg: np.ndarray
    joints: np.ndarray
    fs: float
    channel_names: tuple[str, ...]
    trial_id: int = 0
    session_id: int = 0
    block_id: int = 0

    def __post_init__(self):
        if self.eeg.ndim != 2 or self.joints.ndim != 2:
            raise ConfigurationError("eeg and joints must be 2-D arrays")
        if self.eeg.shape[1] != self.joints.shape[1]:
            raise ConfigurationError(
                f"eeg ({self.eeg.shape[1]}) and joints ({self.joints.shape[1]}) "
                "must share the time extent"
            )
        if self.joints.shape[0] != N_JOINTS:
            raise ConfigurationError(f"expected {N_JOINTS} joint rows")
        if self.fs <= 0:
            raise ConfigurationError("sample rate must be positive")
        if len(self.channel_names) != self.eeg.shape[0]:
            raise ConfigurationError("channel name count must match EEG rows")

    @property
    def n_channels(self) -> int:
        return self.eeg.shape[0]

    @property
    def n_samples(self) -> int:
        return self.eeg.shape[1]


@dataclass(frozen=True)
class WindowSample:
    """One training sample: window x (C x T) labelled at its final time point."""

    x: np.ndarray
    y: np.ndarray
    t_end: int


@dataclass(frozen=True)
class PrepConfig:
    """Preprocessing parameters (read from the run config JSON)."""

    band_lo_hz: float = 0.1
    band_hi_hz: float = 48.0
    fs_out: float = 100.0
    laplacian_radius_mm: float = 30.0


def bandpass_filter(x: np.ndarray, fs: float, lo: float = 0.1, hi: float = 48.0) -> np.ndarray:
    """Causal Butterworth band-pass per channel (no zero-phase double pass)."""
    if not 0.0 < lo < hi:
        raise ParameterError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if hi >= fs / 2.0:
        raise ParameterError(f"high cutoff {hi} Hz >= Nyquist {fs / 2.0} Hz")
    sos = sps.butter(4, [lo, hi], btype="band", fs=fs, output="sos")
    return sps.sosfilt(sos, x, axis=-1)


def common_average_reference(x: np.ndarray) -> np.ndarray:
    """Subtract the instantaneous mean across channels."""
    if x.shape[0] < 2:
        raise ParameterError("common average reference needs at least 2 channels")
    return x - x.mean(axis=0, keepdims=True)


def downsample(
    x: np.ndarray, fs_in: float, fs_out: float = 100.0, antialias: bool = True
) -> np.ndarray:
    """Anti-alias low-pass then decimate by the integer factor fs_in/fs_out.

    ``antialias=False`` is used for the joint-angle targets, which are
    decimated at the same phase (indices 0, factor, ...) so the EEG/label
    alignment is preserved without smearing the targets.
    """
    ratio = fs_in / fs_out
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 or factor < 1:
        raise ParameterError(
            f"fs_in {fs_in} must be an integer multiple of fs_out {fs_out}"
        )
    if factor == 1:
        return x.copy()
    if antialias:
        cutoff = 0.8 * (fs_out / 2.0)
        sos = sps.butter(8, cutoff, btype="low", fs=fs_in, output="sos")
        x = sps.sosfilt(sos, x, axis=-1)
    return x[..., ::factor].copy()


def neighbor_matrix(layout: ElectrodeLayout, radius_mm: float = 30.0) -> np.ndarray:
    """Boolean C x C matrix of within-radius neighbours (self excluded)."""
    d = layout.pairwise_distances()
    return (d < radius_mm) & ~np.eye(layout.n_channels, dtype=bool)


def laplacian_filter(
    x: np.ndarray,
    layout: ElectrodeLayout,
    channel_names,
    radius_mm: float = 30.0,
) -> np.ndarray:
    """Subtract each channel's within-radius neighbour mean.

    Channels with no neighbour inside the radius pass through unchanged.
    Linear in the input, so it is implemented as a single matrix product.
    """
    order = [layout.index_of(n) for n in channel_names]
    sub = ElectrodeLayout(tuple(channel_names), layout.positions[order].copy())
    nb = neighbor_matrix(sub, radius_mm)
    counts = nb.sum(axis=1)
    weights = np.zeros_like(nb, dtype=float)
    active = counts > 0
    weights[active] = nb[active] / counts[active, None]
    op = np.eye(len(channel_names)) - weights
    return op @ x


def sliding_windows(trial: TrialRecord, window: int, stride: int = 1) -> list[WindowSample]:
    """Windows [i, i+T) with the label taken at each window's final sample."""
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    t = trial.n_samples
    if window > t:
        warnings.warn(
            f"trial {trial.trial_id}: window {window} exceeds trial length {t}; "
            "no samples produced"
        )
        return []
    samples = []
    for start in range(0, t - window + 1, stride):
        end = start + window
        samples.append(
            WindowSample(
                x=trial.eeg[:, start:end],
                y=trial.joints[:, end - 1].copy(),
                t_end=end - 1,
            )
        )
    return samples


def window_count(t: int, window: int, stride: int = 1) -> int:
    if window > t:
        return 0
    return (t - window) // stride + 1


def preprocess_trial(
    trial: TrialRecord, layout: ElectrodeLayout, cfg: PrepConfig = PrepConfig()
) -> TrialRecord:
    """Run the full chain on one trial; output is at ``cfg.fs_out`` Hz."""
    eeg = bandpass_filter(trial.eeg, trial.fs, cfg.band_lo_hz, cfg.band_hi_hz)
    eeg = common_average_reference(eeg)
    eeg = downsample(eeg, trial.fs, cfg.fs_out)
    joints = downsample(trial.joints, trial.fs, cfg.fs_out, antialias=False)
    eeg = laplacian_filter(eeg, layout, trial.channel_names, cfg.laplacian_radius_mm)
    return replace(trial, eeg=eeg, joints=joints, fs=cfg.fs_out)
