"""Preprocessing chain tests: filter attenuation oracles measured on
steady-state sinusoids, reference/Laplacian algebra, and windowing."""

import numpy as np
import pytest

from gaitdecode.errors import ConfigurationError, ParameterError
from gaitdecode.montage import ElectrodeLayout, builtin_layout
from gaitdecode.signal_prep import (
    PrepConfig,
    TrialRecord,
    bandpass_filter,
    common_average_reference,
    downsample,
    laplacian_filter,
    preprocess_trial,
    sliding_windows,
)


def sine(freq, fs, seconds, amp=1.0):
    t = np.arange(int(fs * seconds)) / fs
    return amp * np.sin(2.0 * np.pi * freq * t)


def steady_rms(x):
    tail = x[..., x.shape[-1] // 2 :]
    return np.sqrt((tail**2).mean(axis=-1))


class TestBandpass:
    def test_passband_tone_preserved(self):
        x = sine(10.0, 1000.0, 10.0)[None, :]
        y = bandpass_filter(x, 1000.0)
        assert abs(steady_rms(y)[0] / steady_rms(x)[0] - 1.0) < 0.05

    def test_dc_rejected(self):
        # the 0.1 Hz high-pass corner needs tens of seconds to settle
        x = np.full((1, 40_000), 5.0)
        y = bandpass_filter(x, 1000.0)
        assert np.abs(y[0, 30_000:]).max() < 0.05  # < 1 % of the input level

    def test_stopband_tone_attenuated(self):
        x = sine(100.0, 1000.0, 10.0)[None, :]
        y = bandpass_filter(x, 1000.0)
        ratio = steady_rms(y)[0] / steady_rms(x)[0]
        assert 20.0 * np.log10(ratio) < -20.0

    def test_causality(self):
        # impulse at sample 500: output before it must stay exactly zero
        x = np.zeros((1, 1000))
        x[0, 500] = 1.0
        y = bandpass_filter(x, 1000.0)
        assert np.all(y[0, :500] == 0.0)

    def test_cutoff_above_nyquist_rejected(self):
        with pytest.raises(ParameterError):
            bandpass_filter(np.zeros((1, 100)), fs=80.0, lo=0.1, hi=48.0)


class TestCommonAverageReference:
    def test_identical_channels_zeroed(self):
        x = np.tile(sine(3.0, 100.0, 1.0), (4, 1))
        assert np.allclose(common_average_reference(x), 0.0)

    def test_antisymmetric_pair_unchanged(self):
        a = sine(3.0, 100.0, 1.0)
        x = np.stack([a, -a])
        assert np.allclose(common_average_reference(x), x)

    def test_column_sums_vanish(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((7, 500))
        y = common_average_reference(x)
        assert np.abs(y.sum(axis=0)).max() < 1e-10

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 100))
        once = common_average_reference(x)
        assert np.allclose(common_average_reference(once), once, atol=1e-14)

    def test_single_channel_rejected(self):
        with pytest.raises(ParameterError):
            common_average_reference(np.zeros((1, 10)))


class TestDownsample:
    def test_factor_ten_length(self):
        y = downsample(np.zeros((2, 1000)), 1000.0, 100.0)
        assert y.shape == (2, 100)

    def test_constant_preserved(self):
        x = np.full((1, 2000), 3.5)
        y = downsample(x, 1000.0, 100.0)
        assert np.allclose(y[0, 100:], 3.5, atol=0.01)

    def test_passband_survives_stopband_dies(self):
        lo = sine(5.0, 1000.0, 10.0)[None, :]
        hi = sine(80.0, 1000.0, 10.0)[None, :]
        y_lo = downsample(lo, 1000.0, 100.0)
        y_hi = downsample(hi, 1000.0, 100.0)
        assert abs(steady_rms(y_lo)[0] / steady_rms(lo)[0] - 1.0) < 0.05
        ratio = steady_rms(y_hi)[0] / steady_rms(hi)[0]
        assert 20.0 * np.log10(ratio) < -20.0

    def test_non_integer_factor_rejected(self):
        with pytest.raises(ParameterError):
            downsample(np.zeros((1, 100)), 250.0, 100.0)


def triangle_layout():
    # ch0 at origin with ch1/ch2 20 mm away; ch1-ch2 are 40 mm apart
    positions = np.array(
        [[0.0, 0.0, 0.0], [20.0, 0.0, 0.0], [-20.0, 0.0, 0.0]]
    )
    return ElectrodeLayout(("a", "b", "c"), positions)


class TestLaplacian:
    def test_constant_field_vanishes(self):
        layout = triangle_layout()
        x = np.full((3, 10), 5.0)
        y = laplacian_filter(x, layout, ("a", "b", "c"))
        assert np.allclose(y, 0.0)

    def test_hand_value(self):
        layout = triangle_layout()
        x = np.array([[3.0], [1.0], [1.0]])
        y = laplacian_filter(x, layout, ("a", "b", "c"))
        assert y[0, 0] == pytest.approx(2.0)  # 3 - mean(1, 1)

    def test_isolated_channel_passthrough(self):
        positions = np.array([[0.0, 0.0, 0.0], [20.0, 0.0, 0.0], [500.0, 0.0, 0.0]])
        layout = ElectrodeLayout(("a", "b", "far"), positions)
        x = np.array([[1.0], [2.0], [7.0]])
        y = laplacian_filter(x, layout, ("a", "b", "far"))
        assert y[2, 0] == pytest.approx(7.0)

    def test_linearity(self):
        layout = builtin_layout()
        rng = np.random.default_rng(2)
        x = rng.standard_normal((59, 50))
        y = rng.standard_normal((59, 50))
        lhs = laplacian_filter(2.0 * x + 3.0 * y, layout, layout.names)
        rhs = 2.0 * laplacian_filter(x, layout, layout.names) + 3.0 * laplacian_filter(
            y, layout, layout.names
        )
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_unknown_channel_rejected(self):
        layout = triangle_layout()
        with pytest.raises(ConfigurationError):
            laplacian_filter(np.zeros((1, 5)), layout, ("nope",))


def make_trial(n_channels=3, t=50, fs=100.0):
    rng = np.random.default_rng(3)
    return TrialRecord(
        eeg=rng.standard_normal((n_channels, t)),
        joints=rng.standard_normal((6, t)),
        fs=fs,
        channel_names=tuple(f"ch{i}" for i in range(n_channels)),
    )


class TestSlidingWindows:
    def test_count_matches_stride_one(self):
        trial = make_trial(t=5)
        assert len(sliding_windows(trial, window=3)) == 3  # t - T + 1

    def test_single_window_at_boundary(self):
        trial = make_trial(t=7)
        assert len(sliding_windows(trial, window=7)) == 1

    def test_stride_arithmetic(self):
        trial = make_trial(t=10)
        wins = sliding_windows(trial, window=3, stride=5)
        assert [w.t_end for w in wins] == [2, 7]

    def test_label_is_final_sample(self):
        trial = make_trial(t=20)
        for w in sliding_windows(trial, window=6, stride=3):
            assert np.array_equal(w.y, trial.joints[:, w.t_end])
            assert np.array_equal(w.x, trial.eeg[:, w.t_end - 5 : w.t_end + 1])

    def test_short_trial_warns_and_is_empty(self):
        trial = make_trial(t=4)
        with pytest.warns(UserWarning):
            assert sliding_windows(trial, window=9) == []


class TestPipeline:
    def test_shapes_alignment_and_determinism(self):
        layout = builtin_layout().subset(["Cz", "CPz", "Pz", "Fz"])
        rng = np.random.default_rng(4)
        t = 4000
        trial = TrialRecord(
            eeg=rng.standard_normal((4, t)),
            joints=rng.standard_normal((6, t)),
            fs=1000.0,
            channel_names=("Cz", "CPz", "Pz", "Fz"),
        )
        out1 = preprocess_trial(trial, layout, PrepConfig())
        out2 = preprocess_trial(trial, layout, PrepConfig())
        assert out1.fs == 100.0
        assert out1.eeg.shape == (4, 400)
        assert out1.joints.shape == (6, 400)
        # joints are decimated at phase 0 so labels stay aligned
        assert np.array_equal(out1.joints, trial.joints[:, ::10])
        assert np.array_equal(out1.eeg, out2.eeg)
