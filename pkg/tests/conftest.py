"""Shared builders for synthetic frames and audio used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from adhook.ingest import AudioClip, Frame

SR = 16000


def make_frame(rgb, width=32, height=24, timestamp_s=0.0) -> Frame:
    pixels = np.tile(np.array(rgb, dtype=np.uint8), (height, width, 1))
    return Frame(width=width, height=height, pixels=pixels, timestamp_s=timestamp_s)


def random_frame(seed, width=32, height=24, timestamp_s=0.0) -> Frame:
    gen = np.random.default_rng(seed)
    pixels = gen.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return Frame(width=width, height=height, pixels=pixels, timestamp_s=timestamp_s)


def sine_clip(f0=440.0, amp=0.8, secs=3.0, sr=SR) -> AudioClip:
    t = np.arange(int(secs * sr)) / sr
    return AudioClip(sample_rate_hz=sr, samples=amp * np.sin(2 * np.pi * f0 * t))


def click_clip(bpm=120.0, secs=3.0, sr=SR, amp=0.9) -> AudioClip:
    samples = np.zeros(int(secs * sr))
    period = 60.0 / bpm
    k = 0
    while True:
        start = int(round(k * period * sr))
        if start >= len(samples):
            break
        samples[start] = amp
        k += 1
    return AudioClip(sample_rate_hz=sr, samples=samples)


def voiced_clip(seed: int, secs=2.0, sr=SR) -> AudioClip:
    """Harmonic-rich signal with slow vibrato; keeps every window voiced."""
    gen = np.random.default_rng(seed)
    f0 = float(gen.uniform(120, 400))
    amp = float(gen.uniform(0.6, 0.95))
    t = np.arange(int(secs * sr)) / sr
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * float(gen.uniform(2, 5)) * t)
    phase = 2 * np.pi * f0 * np.cumsum(vibrato) / sr
    wave = np.sin(phase) + 0.4 * np.sin(2 * phase) + 0.2 * np.sin(3 * phase)
    wave = wave / np.max(np.abs(wave)) * amp
    return AudioClip(sample_rate_hz=sr, samples=wave)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
