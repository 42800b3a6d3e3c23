"""Spectral diagnostics: entropy, harmonic distortion, smoothing, redundancy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmerge import (
    TokenMatrix,
    gaussian_lowpass,
    redundancy_profile,
    spectral_entropy,
    thd,
)
from seqmerge.errors import ParameterError, ShapeError, UndefinedThdError
from seqmerge.signals import analyze_series, dominant_bin

from helpers_oracle import oracle_spectral_entropy


def sine(m, cycles, amp=1.0, phase=0.0):
    return amp * np.sin(2 * np.pi * cycles * np.arange(m) / m + phase)


class TestSpectralEntropy:
    def test_constant_is_zero(self):
        assert spectral_entropy(np.full(64, 3.25)) == 0.0

    def test_single_bin_sine_is_zero(self):
        # all positive-frequency power sits in one bin
        assert spectral_entropy(sine(128, 4)) == pytest.approx(0.0, abs=1e-20)

    def test_two_equal_bins_give_log2(self):
        s = sine(128, 4) + sine(128, 9)
        assert spectral_entropy(s) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_matches_direct_definition(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            s = rng.normal(size=96)
            assert spectral_entropy(s) == pytest.approx(
                oracle_spectral_entropy(s), rel=1e-12
            )

    def test_noise_is_near_maximal(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=512)
        max_ent = np.log(256)  # 256 positive-frequency bins
        assert spectral_entropy(s) > 0.9 * max_ent

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            spectral_entropy(np.zeros((4, 4)))
        with pytest.raises(ShapeError):
            spectral_entropy(np.array([1.0]))
        with pytest.raises(ShapeError):
            spectral_entropy(np.array([1.0, np.nan]))


class TestThd:
    def test_pure_sine_is_exactly_zero(self):
        assert thd(sine(512, 8), 8) == 0.0

    def test_square_wave_matches_closed_form(self):
        # period 128 over 1024 samples; harmonics 3 and 5 carry
        # 1/sin(3 pi/128) and 1/sin(5 pi/128) of the fundamental's shape
        m, period = 1024, 128
        s = np.where((np.arange(m) % period) < period // 2, 1.0, -1.0)
        got = thd(s, m // period)
        amps = [1.0 / np.sin(np.pi * h / period) for h in (1, 3, 5)]
        want = 100.0 * np.hypot(amps[1], amps[2]) / amps[0]
        assert got == pytest.approx(want, abs=1e-9)
        assert abs(got - 38.87) < 0.5

    def test_controlled_harmonic_mix(self):
        s = sine(256, 4) + 0.1 * sine(256, 8) + 0.05 * sine(256, 12)
        want = 100.0 * np.sqrt(0.1**2 + 0.05**2)
        assert thd(s, 4) == pytest.approx(want, rel=1e-9)

    def test_zero_fundamental_is_undefined(self):
        with pytest.raises(UndefinedThdError):
            thd(sine(256, 8), 3)  # no power at bin 3

    def test_nyquist_guard(self):
        with pytest.raises(ParameterError):
            thd(sine(64, 7), 7)  # 5th harmonic at bin 35 > 32

    def test_fundamental_bin_validation(self):
        with pytest.raises(ParameterError):
            thd(sine(64, 4), 0)


class TestGaussianLowpass:
    def test_constant_passthrough(self):
        s = np.full(50, 7.5)
        np.testing.assert_allclose(gaussian_lowpass(s, 3.0), s, atol=1e-12)

    def test_offset_commutes(self):
        rng = np.random.default_rng(2)
        s = rng.normal(size=80)
        a = gaussian_lowpass(s + 11.0, 2.0)
        b = gaussian_lowpass(s, 2.0) + 11.0
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_sigma_zero_is_identity(self):
        s = np.random.default_rng(3).normal(size=30)
        np.testing.assert_array_equal(gaussian_lowpass(s, 0.0), s)

    def test_smoothing_reduces_entropy_of_noise(self):
        rng = np.random.default_rng(4)
        s = rng.normal(size=256)
        assert spectral_entropy(gaussian_lowpass(s, 3.0)) < spectral_entropy(s)

    def test_length_preserved(self):
        s = np.random.default_rng(5).normal(size=41)
        assert len(gaussian_lowpass(s, 4.0)) == 41

    def test_negative_sigma_rejected(self):
        with pytest.raises(ParameterError):
            gaussian_lowpass(np.zeros(10), -1.0)


class TestRedundancyProfile:
    def test_identical_pairs_saturate(self):
        rows = np.repeat(np.random.default_rng(6).normal(size=(4, 3)), 2, axis=0)
        x = TokenMatrix.from_tokens(rows)
        prof = redundancy_profile(x, [0.5, 0.9, 0.999])
        assert [frac for _, frac in prof] == [1.0, 1.0, 1.0]

    def test_profile_is_non_increasing(self):
        rng = np.random.default_rng(7)
        x = TokenMatrix.from_tokens(rng.normal(size=(64, 4)))
        prof = redundancy_profile(x, np.linspace(-1, 1, 21), k=4)
        fracs = [f for _, f in prof]
        assert all(b <= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[0] == 1.0  # cosine never drops below -1

    def test_thresholds_must_increase(self):
        x = TokenMatrix.from_tokens(np.random.default_rng(8).normal(size=(8, 2)))
        with pytest.raises(ParameterError):
            redundancy_profile(x, [0.5, 0.5])
        with pytest.raises(ParameterError):
            redundancy_profile(x, [])

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_fraction_counts_best_candidates(self, seed):
        """Fraction times candidate count is an integer in [0, floor(t/2)]."""
        rng = np.random.default_rng(seed)
        t = int(rng.integers(2, 40))
        x = TokenMatrix.from_tokens(rng.normal(size=(t, 3)))
        prof = redundancy_profile(x, [0.0, 0.5, 0.9])
        n = t // 2
        for _, frac in prof:
            count = frac * n
            assert count == pytest.approx(round(count), abs=1e-9)
            assert 0 <= count <= n


class TestAnalyzeSeries:
    def test_periodic_series_report(self):
        rep = analyze_series("demo", sine(256, 4), seed=0)
        assert rep.fundamental_bin == 4
        assert rep.thd_percent == 0.0
        assert rep.entropy == pytest.approx(0.0, abs=1e-12)
        assert rep.length == 256
        d = rep.to_dict()
        assert set(d) == {
            "name", "length", "entropy", "entropy_lowpassed",
            "thd_percent", "fundamental_bin", "redundancy",
        }

    def test_constant_series_has_no_fundamental(self):
        rep = analyze_series("flat", np.full(64, 2.0), seed=0)
        assert rep.fundamental_bin is None
        assert rep.thd_percent is None

    def test_dominant_bin_respects_nyquist_budget(self):
        # strongest bin is 40, but 5*40 > 64; detector must stay <= 12
        s = sine(128, 40, amp=5.0) + sine(128, 3, amp=1.0)
        assert dominant_bin(s) == 3
