import math

import numpy as np
import pytest

from adhook.acoustic import (
    AcousticConfig,
    AcousticFeatures,
    EmptyAudio,
    F0Track,
    SampleRateTooLow,
    ddp,
    estimate_f0,
    extract_acoustic,
    jitter_local,
    loudness_db,
    peak,
    periods_from_track,
    pitch_stats,
    power,
    shimmer_local,
    tempo_estimate,
)
from adhook.ingest import AudioClip, HookClip
from conftest import SR, click_clip, sine_clip, voiced_clip


class TestLoudness:
    def test_silence_floor(self):
        assert loudness_db(AudioClip(SR, np.zeros(1000))) == -100.0

    def test_full_scale_square_wave(self):
        square = np.tile([1.0, -1.0], 500)
        assert loudness_db(AudioClip(SR, square)) == pytest.approx(0.0, abs=1e-9)

    def test_unit_sine(self):
        clip = sine_clip(f0=440, amp=1.0)
        assert loudness_db(clip) == pytest.approx(-3.0103, abs=0.01)

    def test_empty_raises(self):
        with pytest.raises(EmptyAudio):
            loudness_db(AudioClip(SR, np.zeros(0)))


class TestPowerPeak:
    def test_zero(self):
        clip = AudioClip(SR, np.zeros(100))
        assert power(clip) == 0.0
        assert peak(clip) == 0.0

    def test_unit_sine(self):
        clip = sine_clip(f0=440, amp=1.0)
        assert power(clip) == pytest.approx(0.5, abs=1e-3)
        assert peak(clip) == pytest.approx(1.0, abs=1e-6)

    def test_constant_half(self):
        clip = AudioClip(SR, np.full(100, 0.5))
        assert power(clip) == 0.25
        assert peak(clip) == 0.5

    def test_empty_raises(self):
        with pytest.raises(EmptyAudio):
            power(AudioClip(SR, np.zeros(0)))
        with pytest.raises(EmptyAudio):
            peak(AudioClip(SR, np.zeros(0)))


class TestEstimateF0:
    def test_pure_sine_440(self):
        track = estimate_f0(sine_clip(440, 0.8))
        assert track.voiced_fraction == 1.0
        voiced_f0 = track.f0_hz[track.voiced]
        assert np.all(np.abs(voiced_f0 - 440.0) < 2.0)

    def test_white_noise_mostly_unvoiced(self):
        for seed in range(5):
            gen = np.random.default_rng(seed)
            clip = AudioClip(SR, 0.3 * gen.uniform(-1, 1, 3 * SR))
            track = estimate_f0(clip)
            assert track.voiced_fraction < 0.2

    def test_silence_unvoiced(self):
        track = estimate_f0(AudioClip(SR, np.zeros(SR)))
        assert track.voiced_fraction == 0.0

    def test_sample_rate_too_low(self):
        with pytest.raises(SampleRateTooLow):
            estimate_f0(AudioClip(1000, np.zeros(1000)))

    def test_voiced_iff_f0for_positive(self):
        track = estimate_f0(voiced_clip(0))
        assert np.all((track.f0_hz > 0) == track.voiced)

    def test_f0_within_band(self):
        cfg = AcousticConfig()
        track = estimate_f0(voiced_clip(1), cfg)
        voiced_f0 = track.f0_hz[track.voiced]
        assert np.all(voiced_f0 >= cfg.f0_min_hz)
        assert np.all(voiced_f0 <= cfg.f0_max_hz)


class TestPitchStats:
    def test_no_voiced_frames(self):
        track = F0Track(0.01, np.zeros(5), np.zeros(5, bool), np.zeros(5))
        assert pitch_stats(track) == (0.0, 0.0, 0.0)

    def test_constant(self):
        track = F0Track(0.01, np.full(5, 440.0), np.ones(5, bool), np.ones(5))
        assert pitch_stats(track) == (440.0, 440.0, 440.0)

    def test_three_values(self):
        track = F0Track(
            0.01, np.array([100.0, 200.0, 300.0]), np.ones(3, bool), np.ones(3)
        )
        assert pitch_stats(track) == (300.0, 100.0, 200.0)


class TestPeriods:
    def test_all_unvoiced_empty(self):
        track = F0Track(0.01, np.zeros(6), np.zeros(6, bool), np.zeros(6))
        assert periods_from_track(track) == []

    def test_short_runs_dropped(self):
        voiced = np.array([True, True, False, True, True, True])
        f0 = np.where(voiced, 100.0, 0.0)
        track = F0Track(0.01, f0, voiced, np.ones(6))
        runs = periods_from_track(track)
        assert len(runs) == 1
        assert len(runs[0]) == 3

    def test_periods_are_reciprocals(self):
        voiced = np.ones(4, bool)
        track = F0Track(0.01, np.array([100.0, 200.0, 400.0, 250.0]), voiced, np.ones(4))
        runs = periods_from_track(track)
        assert runs[0] == pytest.approx([0.01, 0.005, 0.0025, 0.004])


class TestJitter:
    def test_constant_periods_zero(self):
        assert jitter_local([np.full(5, 0.01)]) == 0.0

    def test_hand_arithmetic(self):
        assert jitter_local([np.array([0.010, 0.012, 0.010])]) == pytest.approx(0.1875, abs=1e-9)

    def test_pure_sine_small(self):
        track = estimate_f0(sine_clip(440, 0.8))
        assert jitter_local(periods_from_track(track)) < 0.005

    def test_empty(self):
        assert jitter_local([]) == 0.0


class TestDdp:
    def test_linear_ramp_zero(self):
        ramp = np.linspace(0.010, 0.014, 6)
        assert ddp([ramp]) == pytest.approx(0.0, abs=1e-12)

    def test_hand_arithmetic(self):
        assert ddp([np.array([0.010, 0.012, 0.010])]) == pytest.approx(0.375, abs=1e-9)

    def test_constant_zero(self):
        assert ddp([np.full(4, 0.02)]) == 0.0

    def test_short_runs_zero(self):
        assert ddp([np.array([0.01, 0.011])]) == 0.0


class TestShimmer:
    def test_constant_sine_small(self):
        track = estimate_f0(sine_clip(440, 0.8))
        assert shimmer_local(track) < 0.01

    def test_hand_arithmetic(self):
        voiced = np.ones(3, bool)
        track = F0Track(0.01, np.full(3, 100.0), voiced, np.array([0.5, 1.0, 0.5]))
        assert shimmer_local(track) == pytest.approx(0.75, abs=1e-9)

    def test_single_voiced_frame_zero(self):
        voiced = np.array([False, True, False])
        track = F0Track(0.01, np.array([0, 100.0, 0]), voiced, np.array([0, 0.5, 0]))
        assert shimmer_local(track) == 0.0


class TestTempo:
    def test_click_train_120(self):
        assert tempo_estimate(click_clip(120)) == pytest.approx(120.0, abs=2.0)

    def test_click_train_90(self):
        assert tempo_estimate(click_clip(90)) == pytest.approx(90.0, abs=2.0)

    def test_short_clip_missing(self):
        assert tempo_estimate(AudioClip(SR, np.ones(int(0.5 * SR)))) is None

    def test_silence_missing(self):
        assert tempo_estimate(AudioClip(SR, np.zeros(2 * SR))) is None

    def test_within_band(self):
        for bpm in (60, 100, 150, 200):
            got = tempo_estimate(click_clip(bpm))
            assert got is not None and 40.0 <= got <= 240.0


class TestExtractAcoustic:
    def hook_with(self, clip):
        return HookClip(asset_id="x", frames=[], audio=clip)

    def test_no_audio_missing_sentinel(self):
        features = extract_acoustic(self.hook_with(AudioClip(SR, np.zeros(0))))
        assert features.has_audio is False
        for name in AcousticFeatures.SCALAR_FIELDS:
            assert getattr(features, name) is None

    def test_sine_composite(self):
        features = extract_acoustic(self.hook_with(sine_clip(440, 0.8)))
        assert features.has_audio is True
        assert features.pitch_mean_hz == pytest.approx(440.0, abs=2.0)
        assert features.jitter_local < 0.005
        assert features.power == pytest.approx(0.8**2 / 2, abs=1e-3)
        assert features.peak == pytest.approx(0.8, abs=1e-6)

    def test_silence_hook(self):
        features = extract_acoustic(self.hook_with(AudioClip(SR, np.zeros(2 * SR))))
        assert features.db_mean == -100.0
        assert features.peak == 0.0
        assert features.voiced_fraction == 0.0
        assert features.tempo_bpm is None

    def test_json_round_trip(self):
        features = extract_acoustic(self.hook_with(sine_clip(300, 0.5)))
        again = AcousticFeatures.from_json(features.to_json())
        assert again == features

    def test_pitch_ordering(self):
        for seed in range(5):
            features = extract_acoustic(self.hook_with(voiced_clip(seed)))
            if features.voiced_fraction > 0:
                assert features.pitch_min_hz <= features.pitch_mean_hz <= features.pitch_max_hz

    def test_determinism(self):
        a = extract_acoustic(self.hook_with(voiced_clip(3)))
        b = extract_acoustic(self.hook_with(voiced_clip(3)))
        assert a.to_json() == b.to_json()


def scaled(clip, c):
    return AudioClip(clip.sample_rate_hz, clip.samples * c)


class TestAmplitudeCovariance:
    def test_scale_invariant_and_covariant_features(self):
        for seed in range(10):
            clip = voiced_clip(seed)
            base = extract_acoustic(HookClip(asset_id="x", frames=[], audio=clip))
            for c in (0.1, 0.5, 0.9):
                got = extract_acoustic(HookClip(asset_id="x", frames=[], audio=scaled(clip, c)))
                for name in ("jitter_local", "ddp", "shimmer_local",
                             "pitch_max_hz", "pitch_min_hz", "pitch_mean_hz"):
                    b, g = getattr(base, name), getattr(got, name)
                    if b == 0.0:
                        assert abs(g) < 1e-9
                    else:
                        assert abs(g - b) / abs(b) < 1e-6, name
                assert got.power == pytest.approx(c**2 * base.power, rel=1e-6)
                assert got.peak == pytest.approx(c * base.peak, rel=1e-6)
                assert got.db_mean == pytest.approx(base.db_mean + 20 * math.log10(c), abs=1e-3)

    def test_tempo_invariant_on_clicks(self):
        clip = click_clip(120)
        base = tempo_estimate(clip)
        for c in (0.1, 0.5, 0.9):
            assert tempo_estimate(scaled(clip, c)) == pytest.approx(base, abs=1e-9)


class TestTimeReversal:
    def test_level_features_unchanged(self):
        clip = voiced_clip(4)
        reverse = AudioClip(clip.sample_rate_hz, clip.samples[::-1].copy())
        assert power(reverse) == pytest.approx(power(clip), rel=1e-12)
        assert peak(reverse) == peak(clip)
        assert loudness_db(reverse) == pytest.approx(loudness_db(clip), abs=1e-9)


class TestPeakPowerInequality:
    def test_peak_at_least_rms(self):
        for seed in range(20):
            gen = np.random.default_rng(seed)
            clip = AudioClip(SR, gen.uniform(-1, 1, 2000) * gen.uniform(0.1, 1.0))
            assert peak(clip) >= math.sqrt(power(clip)) - 1e-12
