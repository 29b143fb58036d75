"""Synthetic gait-EEG generation, trial CSV I/O, split policies, and
gait-cycle segmentation/normalisation.

The generator builds joint-angle trajectories as three-harmonic sinusoids
of the gait frequency (right leg shifted by half a cycle) and mixes them
into a handful of designated source channels, with the neural signal
leading the kinematics. Noise: pink (1/f), a 10 Hz rhythm, and white.
Everything is a pure function of the spec, including its seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from gaitdecode.errors import ConfigurationError, DataFormatError, ParameterError, SplitError
from gaitdecode.montage import ElectrodeLayout
from gaitdecode.signal_prep import JOINT_NAMES, N_JOINTS, TrialRecord

# per-joint harmonic amplitudes (degrees) and phases for k = 1..3;
# hips keep a small even harmonic so left/right traces stay near-antiphase
_HARMONICS = {
    "hip": ((30.0, 0.0), (6.0, 0.7), (2.0, 1.9)),
    "knee": ((35.0, 1.1), (12.0, 2.3), (4.0, 0.4)),
    "ankle": ((12.0, 2.0), (5.0, 1.2), (2.0, 2.8)),
}
_JOINT_KIND = ("hip", "knee", "ankle", "hip", "knee", "ankle")

DEFAULT_SOURCE_CHANNELS = ("Cz", "FC1", "FC2", "CPz")


@dataclass(frozen=True)
class SynthSpec:
    """Deterministic synthetic session description."""

    channel_names: tuple[str, ...]
    fs: float = 1000.0
    gait_freq_hz: float = 1.0
    n_blocks: int = 3
    trials_per_block: int = 8
    trial_seconds: float = 20.0
    source_channels: tuple[str, ...] = DEFAULT_SOURCE_CHANNELS
    source_gain: float = 1.0
    joint_scale: float = 1.0
    pink_amp: float = 1.0
    rhythm_amp: float = 1.0
    white_std: float = 1.0
    neural_lead_ms: float = 100.0
    seed: int = 0

    def __post_init__(self):
        for amp in (self.source_gain, self.pink_amp, self.rhythm_amp, self.white_std):
            if amp < 0.0:
                raise ConfigurationError("amplitudes must be non-negative")
        missing = [c for c in self.source_channels if c not in self.channel_names]
        if missing:
            raise ConfigurationError(f"source channels missing from montage: {missing}")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def to_dict(self) -> dict:
        return {
            "channel_names": list(self.channel_names),
            "fs": self.fs,
            "gait_freq_hz": self.gait_freq_hz,
            "n_blocks": self.n_blocks,
            "trials_per_block": self.trials_per_block,
            "trial_seconds": self.trial_seconds,
            "source_channels": list(self.source_channels),
            "source_gain": self.source_gain,
            "joint_scale": self.joint_scale,
            "pink_amp": self.pink_amp,
            "rhythm_amp": self.rhythm_amp,
            "white_std": self.white_std,
            "neural_lead_ms": self.neural_lead_ms,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["channel_names"] = tuple(d["channel_names"])
        d["source_channels"] = tuple(d.get("source_channels", DEFAULT_SOURCE_CHANNELS))
        return cls(**d)


def joint_trajectories(spec: SynthSpec, t_seconds: np.ndarray) -> np.ndarray:
    """Analytic joint angles (6 x len); right leg lags by half a cycle."""
    out = np.zeros((N_JOINTS, t_seconds.size))
    for j, kind in enumerate(_JOINT_KIND):
        shift = 0.5 / spec.gait_freq_hz if j >= 3 else 0.0
        t = t_seconds - shift
        for k, (amp, phase) in enumerate(_HARMONICS[kind], start=1):
            out[j] += amp * np.sin(2.0 * math.pi * k * spec.gait_freq_hz * t + phase)
    return out * spec.joint_scale


def default_mixing(spec: SynthSpec) -> np.ndarray:
    """C x 6 source-to-channel gains, concentrated on the source channels.

    Each source channel carries a distinct fixed joint mixture so that no
    two sources are redundant.
    """
    patterns = [
        (0.8, 0.0, 0.0, -0.8, 0.0, 0.0),
        (0.0, 1.0, 0.3, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0, 1.0, 0.3),
        (0.4, -0.3, 0.0, 0.4, -0.3, 0.0),
    ]
    mixing = np.zeros((spec.n_channels, N_JOINTS))
    for i, name in enumerate(spec.source_channels):
        row = spec.channel_names.index(name)
        mixing[row] = np.array(patterns[i % len(patterns)]) * spec.source_gain
    return mixing


def _pink_noise(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """1/f-shaped noise per row, unit standard deviation."""
    c, t = shape
    white = rng.standard_normal((c, t))
    spectrum = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(t)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = np.fft.irfft(spectrum * scale, n=t, axis=1)
    sd = shaped.std(axis=1, keepdims=True)
    sd[sd == 0.0] = 1.0
    return shaped / sd


def synth_generate(spec: SynthSpec, mixing: np.ndarray | None = None) -> list[TrialRecord]:
    """Generate one session of trials with a continuous global time axis.

    Gait phase runs continuously across trial boundaries, so concatenating
    consecutive trials reproduces one long walk.
    """
    if mixing is None:
        mixing = default_mixing(spec)
    if mixing.shape != (spec.n_channels, N_JOINTS):
        raise ConfigurationError(
            f"mixing must be ({spec.n_channels}, {N_JOINTS}), got {mixing.shape}"
        )
    rng = np.random.default_rng(spec.seed)
    samples_per_trial = int(round(spec.trial_seconds * spec.fs))
    n_trials = spec.n_blocks * spec.trials_per_block
    total = n_trials * samples_per_trial

    t_axis = np.arange(total) / spec.fs
    joints = joint_trajectories(spec, t_axis)
    lead = spec.neural_lead_ms / 1000.0
    eeg = mixing @ joint_trajectories(spec, t_axis + lead)
    eeg += spec.pink_amp * _pink_noise(rng, (spec.n_channels, total))
    rhythm_phases = rng.uniform(0.0, 2.0 * math.pi, size=spec.n_channels)
    eeg += spec.rhythm_amp * np.sin(
        2.0 * math.pi * 10.0 * t_axis[None, :] + rhythm_phases[:, None]
    )
    eeg += spec.white_std * rng.standard_normal((spec.n_channels, total))

    trials = []
    for idx in range(n_trials):
        sl = slice(idx * samples_per_trial, (idx + 1) * samples_per_trial)
        trials.append(
            TrialRecord(
                eeg=eeg[:, sl].copy(),
                joints=joints[:, sl].copy(),
                fs=spec.fs,
                channel_names=spec.channel_names,
                trial_id=idx % spec.trials_per_block + 1,
                block_id=idx // spec.trials_per_block + 1,
                session_id=1,
            )
        )
    return trials


# ---------------------------------------------------------------------------
# trial CSV I/O

_JOINT_COLUMNS = [f"joint_{n}" for n in JOINT_NAMES]


def save_trial_csv(trial: TrialRecord, path) -> None:
    path = Path(path)
    header = ["time"] + [f"ch_{n}" for n in trial.channel_names] + _JOINT_COLUMNS
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        times = np.arange(trial.n_samples) / trial.fs
        for i in range(trial.n_samples):
            row = [repr(float(times[i]))]
            row += [repr(float(v)) for v in trial.eeg[:, i]]
            row += [repr(float(v)) for v in trial.joints[:, i]]
            writer.writerow(row)


def load_trial_csv(path, layout: ElectrodeLayout | None = None) -> TrialRecord:
    """Parse one trial CSV; sample rate is inferred from the time column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "time":
            raise DataFormatError(f"{path}: first column must be 'time'")
        channel_cols = [h for h in header[1:] if h.startswith("ch_")]
        joint_cols = header[1 + len(channel_cols) :]
        if joint_cols != _JOINT_COLUMNS:
            raise DataFormatError(
                f"{path}: expected joint columns {_JOINT_COLUMNS}, got {joint_cols}"
            )
        names = tuple(h[3:] for h in channel_cols)
        if layout is not None:
            for n in names:
                layout.index_of(n)  # raises ConfigurationError on unknown names
        expected = len(header)
        times, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != expected:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {expected} columns, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            times.append(values[0])
            rows.append(values[1:])
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need at least 2 samples")
    times = np.array(times)
    steps = np.diff(times)
    if np.any(np.abs(steps - steps[0]) > 1e-9 * max(1.0, abs(steps[0]))):
        raise DataFormatError(f"{path}: non-uniform time steps")
    data = np.array(rows).T
    return TrialRecord(
        eeg=data[: len(names)],
        joints=data[len(names) :],
        fs=1.0 / steps[0],
        channel_names=names,
    )


# ---------------------------------------------------------------------------
# split policies


@dataclass(frozen=True)
class SplitResult:
    train: list
    val: list
    test: list


def split_ged(trials: list[TrialRecord]) -> SplitResult:
    """Block-structured split: blocks 1-2 + first half of block 3 train;
    the next eighth validates; the rest of block 3 tests.

    At full scale (3 blocks x 40 trials) the boundaries are trials 20/25
    of block 3; scaled-down runs use the same proportions (1/2 and 5/8).
    """
    blocks: dict[int, list[TrialRecord]] = {}
    for tr in trials:
        blocks.setdefault(tr.block_id, []).append(tr)
    if sorted(blocks) != [1, 2, 3]:
        raise SplitError(f"expected blocks 1-3, got {sorted(blocks)}")
    for b in blocks.values():
        b.sort(key=lambda tr: tr.trial_id)
    n3 = len(blocks[3])
    if n3 * 20 % 40 or n3 * 25 % 40:
        raise SplitError(
            f"block 3 has {n3} trials; proportional 20/25-of-40 boundaries "
            "need a multiple of 8"
        )
    train_end = n3 * 20 // 40
    val_end = n3 * 25 // 40
    train = blocks[1] + blocks[2] + blocks[3][:train_end]
    val = blocks[3][train_end:val_end]
    test = blocks[3][val_end:]
    if not train or not val or not test:
        raise SplitError(
            f"degenerate split: train={len(train)}, val={len(val)}, test={len(test)}"
        )
    return SplitResult(train, val, test)


def split_mobi(session: TrialRecord) -> SplitResult:
    """Contiguous 67.5 / 7.5 / 25 % temporal split of one session."""
    t = session.n_samples
    if t < 40:
        raise SplitError(f"session too short to split: {t} samples")
    a = int(round(t * 0.675))
    b = int(round(t * 0.75))

    def piece(sl, i):
        return TrialRecord(
            eeg=session.eeg[:, sl].copy(),
            joints=session.joints[:, sl].copy(),
            fs=session.fs,
            channel_names=session.channel_names,
            trial_id=i,
            session_id=session.session_id,
            block_id=session.block_id,
        )

    return SplitResult(
        [piece(slice(0, a), 1)], [piece(slice(a, b), 2)], [piece(slice(b, t), 3)]
    )


# ---------------------------------------------------------------------------
# gait cycles


@dataclass(frozen=True)
class GaitCycle:
    """Per-joint angle curves resampled to a fixed 400-point cycle."""

    curves: np.ndarray  # (6, 400)
    start: int
    end: int

    def __post_init__(self):
        if self.curves.shape != (N_JOINTS, 400):
            raise ConfigurationError(f"cycle curves must be (6, 400), got {self.curves.shape}")
        if self.end <= self.start:
            raise ConfigurationError("cycle boundaries must increase")


CYCLE_POINTS = 400


def segment_gait_cycles(
    knee: np.ndarray,
    fs: float,
    min_period_s: float = 0.5,
    prominence_fraction: float = 0.1,
) -> list[tuple[int, int]]:
    """Consecutive-peak boundaries on the left-knee trace.

    Peaks need at least ``min_period_s`` separation and prominence of
    ``prominence_fraction`` of the signal's peak-to-peak range, which
    rejects ripple on flat segments. An empty result is valid.
    """
    ptp = float(np.ptp(knee))
    if ptp == 0.0:
        return []
    peaks, _ = find_peaks(
        knee,
        distance=max(1, int(round(min_period_s * fs))),
        prominence=prominence_fraction * ptp,
    )
    return [(int(a), int(b)) for a, b in zip(peaks[:-1], peaks[1:])]


def normalize_cycle(cycle: np.ndarray) -> np.ndarray:
    """Linear interpolation of (6, len) onto 400 uniform points per joint.

    Endpoints are preserved exactly.
    """
    if cycle.ndim != 2 or cycle.shape[0] != N_JOINTS:
        raise ParameterError(f"cycle must be (6, len), got {cycle.shape}")
    length = cycle.shape[1]
    if length < 2:
        raise ParameterError(f"degenerate cycle of length {length}")
    src = np.linspace(0.0, 1.0, length)
    dst = np.linspace(0.0, 1.0, CYCLE_POINTS)
    out = np.empty((N_JOINTS, CYCLE_POINTS))
    for j in range(N_JOINTS):
        out[j] = np.interp(dst, src, cycle[j])
    out[:, 0] = cycle[:, 0]
    out[:, -1] = cycle[:, -1]
    return out


def extract_cycles(joints: np.ndarray, fs: float) -> list[GaitCycle]:
    """Segment on the left knee (row 1) and normalise every cycle."""
    bounds = segment_gait_cycles(joints[1], fs)
    return [
        GaitCycle(curves=normalize_cycle(joints[:, a : b + 1]), start=a, end=b)
        for a, b in bounds
    ]


def cycles_to_csv(cycles: list[GaitCycle], path) -> None:
    """Export schema: cycle_id, joint, then the 400 phase values."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle_id", "joint"] + [f"p{i}" for i in range(CYCLE_POINTS)])
        for ci, cyc in enumerate(cycles):
            for j, name in enumerate(JOINT_NAMES):
                writer.writerow([ci, name] + [repr(float(v)) for v in cyc.curves[j]])
