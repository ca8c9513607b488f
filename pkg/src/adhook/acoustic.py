"""Acoustic features of a hook's audio.

Ten scalars are produced per clip: power, mean level in dBFS, local
jitter, tempo, pitch-period difference-of-differences (ddp), pitch
max/min/mean, peak amplitude, and local shimmer, plus voicing metadata.
Pitch tracking is windowed normalized autocorrelation with a fixed
voicing gate; perturbation measures (jitter, ddp, shimmer) follow the
Praat-style "local" definitions and never difference across voiced-run
boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ingest import AudioClip, HookClip

DB_FLOOR = -100.0


class AcousticError(Exception):
    """Base class for acoustic extraction failures."""


class EmptyAudio(AcousticError):
    pass


class SampleRateTooLow(AcousticError):
    pass


@dataclass(frozen=True)
class AcousticConfig:
    """Fixed analysis parameters; defaults are the pipeline's pinned values."""

    f0_min_hz: float = 65.0
    f0_max_hz: float = 1000.0
    f0_win_s: float = 0.04
    f0_hop_s: float = 0.01
    voicing_autocorr_threshold: float = 0.5
    voicing_rms_threshold: float = 0.01
    tempo_win_s: float = 0.046
    tempo_hop_s: float = 0.0116
    tempo_min_bpm: float = 40.0
    tempo_max_bpm: float = 240.0
    min_tempo_clip_s: float = 1.0


@dataclass(eq=False)
class F0Track:
    """Per-window pitch estimates; f0_hz is 0 exactly where voiced is False."""

    hop_s: float
    f0_hz: np.ndarray
    voiced: np.ndarray
    frame_peak_amp: np.ndarray

    @property
    def voiced_fraction(self) -> float:
        return float(self.voiced.mean()) if len(self.voiced) else 0.0


@dataclass
class AcousticFeatures:
    """The per-clip scalar features; None marks a missing value."""

    db_mean: Optional[float]
    jitter_local: Optional[float]
    tempo_bpm: Optional[float]
    ddp: Optional[float]
    pitch_max_hz: Optional[float]
    pitch_min_hz: Optional[float]
    pitch_mean_hz: Optional[float]
    power: Optional[float]
    peak: Optional[float]
    shimmer_local: Optional[float]
    has_audio: bool
    voiced_fraction: Optional[float]

    # Column order for downstream feature matrices. Power leads so that
    # split-gain ties among monotonically related level features (power,
    # dB, peak) resolve to it.
    SCALAR_FIELDS = (
        "power",
        "db_mean",
        "jitter_local",
        "tempo_bpm",
        "ddp",
        "pitch_max_hz",
        "pitch_min_hz",
        "pitch_mean_hz",
        "peak",
        "shimmer_local",
    )

    def to_json(self) -> str:
        payload = {name: getattr(self, name) for name in self.SCALAR_FIELDS}
        payload["has_audio"] = self.has_audio
        payload["voiced_fraction"] = self.voiced_fraction
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, raw: str) -> "AcousticFeatures":
        payload = json.loads(raw)
        return cls(
            db_mean=payload["db_mean"],
            jitter_local=payload["jitter_local"],
            tempo_bpm=payload["tempo_bpm"],
            ddp=payload["ddp"],
            pitch_max_hz=payload["pitch_max_hz"],
            pitch_min_hz=payload["pitch_min_hz"],
            pitch_mean_hz=payload["pitch_mean_hz"],
            power=payload["power"],
            peak=payload["peak"],
            shimmer_local=payload["shimmer_local"],
            has_audio=payload["has_audio"],
            voiced_fraction=payload["voiced_fraction"],
        )

    @classmethod
    def missing(cls) -> "AcousticFeatures":
        return cls(
            db_mean=None,
            jitter_local=None,
            tempo_bpm=None,
            ddp=None,
            pitch_max_hz=None,
            pitch_min_hz=None,
            pitch_mean_hz=None,
            power=None,
            peak=None,
            shimmer_local=None,
            has_audio=False,
            voiced_fraction=None,
        )


def _require_samples(clip: AudioClip) -> np.ndarray:
    if len(clip.samples) == 0:
        raise EmptyAudio("clip has no samples")
    return clip.samples


def loudness_db(clip: AudioClip) -> float:
    """Mean level as 20*log10(RMS) in dBFS, floored at -100 for silence."""
    samples = _require_samples(clip)
    rms = math.sqrt(float(np.mean(samples**2)))
    if rms <= 0.0:
        return DB_FLOOR
    return max(DB_FLOOR, 20.0 * math.log10(rms))


def power(clip: AudioClip) -> float:
    """Mean squared amplitude."""
    samples = _require_samples(clip)
    return float(np.mean(samples**2))


def peak(clip: AudioClip) -> float:
    """Largest absolute amplitude."""
    samples = _require_samples(clip)
    return float(np.max(np.abs(samples)))


def _window_autocorr(window: np.ndarray, lag_lo: int, lag_hi: int) -> np.ndarray:
    """Normalized autocorrelation of one window for lags [lag_lo, lag_hi]."""
    n = len(window)
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(window, size)
    raw = np.fft.irfft(spectrum * np.conj(spectrum), size)[: lag_hi + 1]
    energy = np.concatenate(([0.0], np.cumsum(window**2)))
    lags = np.arange(lag_lo, lag_hi + 1)
    head = energy[n - lags]            # sum of window[:n-lag] squared
    tail = energy[n] - energy[lags]    # sum of window[lag:] squared
    denom = np.sqrt(head * tail)
    out = np.zeros(len(lags))
    valid = denom > 0
    out[valid] = raw[lag_lo : lag_hi + 1][valid] / denom[valid]
    return out


def _fundamental_peak(corr: np.ndarray, rel: float = 0.95) -> int:
    """Index of the smallest-lag local maximum within rel of the band max.

    The autocorrelation of a periodic window peaks at every multiple of
    the period; taking the raw argmax would randomly land on a multiple
    and halve or third the pitch. The earliest near-maximal peak is the
    fundamental.
    """
    floor = rel * float(corr.max())
    for i in range(len(corr)):
        left_ok = i == 0 or corr[i] >= corr[i - 1]
        right_ok = i == len(corr) - 1 or corr[i] >= corr[i + 1]
        if left_ok and right_ok and corr[i] >= floor:
            return i
    return int(np.argmax(corr))


def estimate_f0(clip: AudioClip, cfg: AcousticConfig = AcousticConfig()) -> F0Track:
    """Windowed autocorrelation pitch track with a fixed voicing gate.

    A window is voiced iff its peak normalized autocorrelation inside the
    lag band exceeds the autocorrelation threshold and its RMS exceeds
    the level threshold. Voiced f0 comes from the peak lag refined by
    parabolic interpolation, clamped to [f0_min, f0_max].

    Raises:
        SampleRateTooLow: sample rate below 2 * f0_max.
    """
    sr = clip.sample_rate_hz
    if sr < 2 * cfg.f0_max_hz:
        raise SampleRateTooLow(f"sample rate {sr} < 2 * f0_max {cfg.f0_max_hz}")
    win = int(round(cfg.f0_win_s * sr))
    hop = int(round(cfg.f0_hop_s * sr))
    samples = clip.samples
    n_windows = 1 + (len(samples) - win) // hop if len(samples) >= win else 0

    lag_lo = max(1, int(math.ceil(sr / cfg.f0_max_hz)))
    lag_hi = min(win - 1, int(math.floor(sr / cfg.f0_min_hz)))

    f0 = np.zeros(max(n_windows, 0))
    voiced = np.zeros(max(n_windows, 0), dtype=bool)
    peaks = np.zeros(max(n_windows, 0))
    for w in range(n_windows):
        window = samples[w * hop : w * hop + win]
        peaks[w] = float(np.max(np.abs(window)))
        rms = math.sqrt(float(np.mean(window**2)))
        if rms <= cfg.voicing_rms_threshold or lag_hi <= lag_lo:
            continue
        corr = _window_autocorr(window, lag_lo, lag_hi)
        if float(corr.max()) <= cfg.voicing_autocorr_threshold:
            continue
        best = _fundamental_peak(corr)
        lag = float(lag_lo + best)
        # Parabolic refinement around the peak when neighbors exist.
        if 0 < best < len(corr) - 1:
            left, mid, right = corr[best - 1], corr[best], corr[best + 1]
            denom = left - 2 * mid + right
            if abs(denom) > 1e-12:
                shift = 0.5 * (left - right) / denom
                lag += float(np.clip(shift, -1.0, 1.0))
        estimate = sr / lag
        f0[w] = min(max(estimate, cfg.f0_min_hz), cfg.f0_max_hz)
        voiced[w] = True
    return F0Track(hop_s=hop / sr, f0_hz=f0, voiced=voiced, frame_peak_amp=peaks)


def pitch_stats(track: F0Track) -> tuple[float, float, float]:
    """(max, min, mean) over voiced windows; (0, 0, 0) when none are voiced."""
    voiced_f0 = track.f0_hz[track.voiced]
    if len(voiced_f0) == 0:
        return 0.0, 0.0, 0.0
    return float(voiced_f0.max()), float(voiced_f0.min()), float(voiced_f0.mean())


def _voiced_runs(voiced: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) voiced spans."""
    runs = []
    start = None
    for i, flag in enumerate(voiced):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(voiced)))
    return runs


def periods_from_track(track: F0Track, min_run: int = 3) -> list[np.ndarray]:
    """Pitch periods (1/f0) per voiced run; runs shorter than min_run are dropped."""
    return [
        1.0 / track.f0_hz[start:stop]
        for start, stop in _voiced_runs(track.voiced)
        if stop - start >= min_run
    ]


def jitter_local(period_runs: list[np.ndarray]) -> float:
    """Mean absolute consecutive-period change over the mean period."""
    diffs = [np.abs(np.diff(run)) for run in period_runs if len(run) >= 2]
    if not diffs:
        return 0.0
    all_periods = np.concatenate(period_runs)
    mean_period = float(all_periods.mean())
    if mean_period <= 0.0:
        return 0.0
    return float(np.concatenate(diffs).mean() / mean_period)


def ddp(period_runs: list[np.ndarray]) -> float:
    """Mean absolute second difference of periods over the mean period."""
    second = [np.abs(np.diff(run, n=2)) for run in period_runs if len(run) >= 3]
    if not second or all(len(s) == 0 for s in second):
        return 0.0
    all_periods = np.concatenate(period_runs)
    mean_period = float(all_periods.mean())
    if mean_period <= 0.0:
        return 0.0
    return float(np.concatenate(second).mean() / mean_period)


def shimmer_local(track: F0Track) -> float:
    """Mean absolute consecutive-amplitude change over the mean amplitude.

    Amplitudes are per-window peaks within maximal voiced runs; runs
    need at least one consecutive pair to contribute.
    """
    runs = [
        track.frame_peak_amp[start:stop]
        for start, stop in _voiced_runs(track.voiced)
        if stop - start >= 2
    ]
    if not runs:
        return 0.0
    diffs = np.concatenate([np.abs(np.diff(run)) for run in runs])
    mean_amp = float(np.concatenate(runs).mean())
    if mean_amp <= 0.0:
        return 0.0
    return float(diffs.mean() / mean_amp)


def tempo_estimate(clip: AudioClip, cfg: AcousticConfig = AcousticConfig()) -> Optional[float]:
    """Tempo in BPM from the autocorrelation of a spectral-flux onset envelope.

    Returns None for clips shorter than the minimum length or with a
    degenerate (flat) onset envelope.
    """
    sr = clip.sample_rate_hz
    if len(clip.samples) < cfg.min_tempo_clip_s * sr:
        return None
    win = int(round(cfg.tempo_win_s * sr))
    hop = int(round(cfg.tempo_hop_s * sr))
    samples = clip.samples
    n_windows = 1 + (len(samples) - win) // hop if len(samples) >= win else 0
    if n_windows < 4:
        return None

    hann = np.hanning(win)
    offsets = np.arange(n_windows) * hop
    windows = samples[offsets[:, None] + np.arange(win)] * hann
    magnitudes = np.abs(np.fft.rfft(windows, axis=1))
    flux = np.maximum(magnitudes[1:] - magnitudes[:-1], 0.0).sum(axis=1)
    envelope = flux - flux.mean()
    if float(np.max(np.abs(envelope))) <= 1e-12:
        return None

    hop_s = hop / sr
    lag_lo = int(math.ceil((60.0 / cfg.tempo_max_bpm) / hop_s))
    lag_hi = int(math.floor((60.0 / cfg.tempo_min_bpm) / hop_s))
    lag_hi = min(lag_hi, len(envelope) - 1)
    if lag_hi < lag_lo:
        return None
    size = 1 << (2 * len(envelope) - 1).bit_length()
    spectrum = np.fft.rfft(envelope, size)
    autocorr = np.fft.irfft(spectrum * np.conj(spectrum), size)
    band = autocorr[lag_lo : lag_hi + 1]
    if float(band.max()) <= 0.0:
        return None
    lag = lag_lo + int(np.argmax(band))
    return 60.0 / (lag * hop_s)


def extract_acoustic(hook: HookClip, cfg: AcousticConfig = AcousticConfig()) -> AcousticFeatures:
    """All per-clip acoustic features; a hook without audio yields the
    missing-value record (has_audio False, every scalar None)."""
    clip = hook.audio
    if len(clip.samples) == 0:
        return AcousticFeatures.missing()
    track = estimate_f0(clip, cfg)
    p_max, p_min, p_mean = pitch_stats(track)
    periods = periods_from_track(track)
    return AcousticFeatures(
        db_mean=loudness_db(clip),
        jitter_local=jitter_local(periods),
        tempo_bpm=tempo_estimate(clip, cfg),
        ddp=ddp(periods),
        pitch_max_hz=p_max,
        pitch_min_hz=p_min,
        pitch_mean_hz=p_mean,
        power=power(clip),
        peak=peak(clip),
        shimmer_local=shimmer_local(track),
        has_audio=True,
        voiced_fraction=track.voiced_fraction,
    )
