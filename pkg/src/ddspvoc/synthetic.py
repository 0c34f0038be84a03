"""Synthetic feature generators for tests, benchmarks and fitting demos."""

from __future__ import annotations

import numpy as np

from .analysis import N_PERIODICITY, AcousticFeatures, default_filterbanks
from .signal import FrameConfig, Waveform, mel_project
from .vocoder import SynthConfig, synthesize

# (F1, F2, F3) in Hz, textbook adult-male averages
VOWELS = {
    "a": (730.0, 1090.0, 2440.0),
    "i": (270.0, 2290.0, 3010.0),
    "u": (300.0, 870.0, 2240.0),
    "e": (530.0, 1840.0, 2480.0),
    "o": (570.0, 840.0, 2410.0),
}


def formant_envelope(formants, cfg: FrameConfig = FrameConfig(), bandwidth: float = 120.0,
                     tilt_db_per_octave: float = -6.0, tilt_ref_hz: float = 250.0,
                     level: float = 0.0) -> np.ndarray:
    """Linear magnitude over the rfft bins: resonance peaks on a sloped floor.

    The default -6 dB/octave slope above ``tilt_ref_hz`` is the usual voiced
    source model (glottal -12 dB/oct plus lip radiation +6 dB/oct).
    """
    f = cfg.bin_frequencies()
    mag = 0.05 * np.ones_like(f)
    for fc in formants:
        mag += 1.0 / np.sqrt(1.0 + ((f - fc) / (bandwidth / 2)) ** 2)
    octaves = np.log2(np.maximum(f, tilt_ref_hz) / tilt_ref_hz)
    mag *= 10.0 ** (tilt_db_per_octave * octaves / 20.0)
    return mag * np.exp(level)


def vowel_features(vowel: str = "a", n_frames: int = 50, f0: float = 120.0,
                   cfg: FrameConfig = FrameConfig(), level: float = 0.0,
                   voiced_periodicity: float = 0.9) -> AcousticFeatures:
    """Steady vowel: constant F0, formant envelope, periodicity falling with frequency."""
    if vowel not in VOWELS:
        raise ValueError(f"unknown vowel {vowel!r}; choose from {sorted(VOWELS)}")
    fb80, _ = default_filterbanks(cfg)
    lin = formant_envelope(VOWELS[vowel], cfg, level=level)
    env = np.log(mel_project(lin[None, :], fb80))
    p_row = voiced_periodicity * np.linspace(1.0, 0.3, N_PERIODICITY)
    return AcousticFeatures(
        np.full(n_frames, float(f0)),
        np.tile(p_row, (n_frames, 1)),
        np.tile(env, (n_frames, 1)),
        cfg,
    )


def random_voiced_features(rng: np.random.Generator, n_frames: int,
                           cfg: FrameConfig = FrameConfig(), level: float = 0.0,
                           f0_range=(100.0, 300.0)) -> AcousticFeatures:
    """Random smooth envelopes (mel projections of positive spectra), P in [0.1, 0.9]."""
    fb80, _ = default_filterbanks(cfg)
    f0 = rng.uniform(*f0_range, n_frames)
    p = rng.uniform(0.1, 0.9, (n_frames, N_PERIODICITY))
    k = np.arange(6)
    fr = np.linspace(0.0, 1.0, cfg.n_bins)
    coef = rng.normal(0.0, 1.0, (n_frames, 6)) / (1 + k)
    lin = np.exp(coef @ np.cos(np.pi * np.outer(k, fr)) - 2.0 * fr + level)
    return AcousticFeatures(f0, p, np.log(mel_project(lin, fb80)), cfg)


def sine(freq: float, seconds: float = 1.0, sample_rate: int = 16000, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sample_rate)


def sawtooth(freq: float, seconds: float = 1.0, sample_rate: int = 16000, amp: float = 0.5) -> Waveform:
    """Naive (aliasing) sawtooth in [-amp, amp)."""
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return Waveform(amp * (2.0 * np.mod(freq * t, 1.0) - 1.0), sample_rate)


def modulated_vowel(vowel: str, f0: float, seed: int, seconds: float = 1.0,
                    cfg: FrameConfig = FrameConfig(), depth: float = 0.5) -> Waveform:
    """Vocoded steady vowel whose amplitude follows smoothed noise (~4 Hz)."""
    n_frames = int(round(seconds * cfg.sample_rate)) // cfg.hop
    wave = synthesize(vowel_features(vowel, n_frames, f0, cfg), SynthConfig(cfg, noise_seed=seed))
    rng = np.random.default_rng(seed)
    knots = rng.standard_normal(int(seconds * 4) + 2)
    pos = np.linspace(0, knots.size - 1, len(wave))
    env = 1.0 + depth * np.tanh(np.interp(pos, np.arange(knots.size), knots))
    peak = np.max(np.abs(wave.samples))
    return Waveform(0.5 * wave.samples * env / peak, cfg.sample_rate)


def corpus(seed: int = 0, cfg: FrameConfig = FrameConfig()) -> list[tuple[str, Waveform]]:
    """Five 1 s test utterances: tones, sawtooths and noise-modulated vowels."""
    sr = cfg.sample_rate
    return [
        ("tone_220", sine(220.0, sample_rate=sr)),
        ("saw_150", sawtooth(150.0, sample_rate=sr)),
        ("saw_233", sawtooth(233.0, sample_rate=sr)),
        ("vowel_a", modulated_vowel("a", 120.0, seed, cfg=cfg)),
        ("vowel_i", modulated_vowel("i", 180.0, seed + 1, cfg=cfg)),
    ]
