"""Time-frequency primitives shared by every other module.

Framing is centered: the signal is reflect-padded by ``window_len // 2`` on
both ends so frame ``t`` is centered on sample ``t * hop`` and a signal of
``N`` samples yields ``N // hop + 1`` frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = 1e-5


class ConfigError(ValueError):
    """Raised for an invalid or mismatched framing configuration."""


@dataclass(frozen=True)
class FrameConfig:
    sample_rate: int = 16000
    fft_size: int = 256
    hop: int = 128
    window_len: int = 256
    window_kind: str = "hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError(f"fft_size must be a power of two >= 2, got {self.fft_size}")
        if not 2 <= self.window_len <= self.fft_size:
            raise ConfigError(
                f"window_len must be in [2, fft_size={self.fft_size}], got {self.window_len}"
            )
        if not 1 <= self.hop <= self.window_len:
            raise ConfigError(f"hop must be in [1, window_len], got {self.hop}")
        if self.window_kind not in WINDOWS:
            raise ConfigError(f"unsupported window kind {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate

    def n_frames(self, n_samples: int) -> int:
        return n_samples // self.hop + 1

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * (self.sample_rate / self.fft_size)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    frames: np.ndarray  # (T, F) complex
    config: FrameConfig = field(default_factory=FrameConfig)


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    frames: np.ndarray  # (T, F) real, >= 0
    config: FrameConfig = field(default_factory=FrameConfig)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (M, F)
    f_min: float
    f_max: float
    edges_hz: np.ndarray  # (M + 2,) lower edge, centers, upper edge
    bin_hz: np.ndarray  # (F,) center frequency of each column

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def centers_hz(self) -> np.ndarray:
        return self.edges_hz[1:-1]


def _hann(window_len: int) -> np.ndarray:
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


WINDOWS = {"hann": _hann}


def make_window(kind: str, window_len: int) -> np.ndarray:
    """Periodic window coefficients (``hann`` only)."""
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    try:
        return WINDOWS[kind](window_len)
    except KeyError:
        raise ConfigError(f"unsupported window kind {kind!r}") from None


def analysis_window(cfg: FrameConfig) -> np.ndarray:
    """The config's window zero-padded (centered) to ``fft_size``."""
    w = make_window(cfg.window_kind, cfg.window_len)
    lpad = (cfg.fft_size - cfg.window_len) // 2
    return np.pad(w, (lpad, cfg.fft_size - cfg.window_len - lpad))


def cola_residual(window: np.ndarray, hop: int) -> float:
    """Max deviation of the overlapped window sum from its mean."""
    n = window.shape[0]
    acc = np.zeros(hop)
    for start in range(0, n, hop):
        seg = window[start:start + hop]
        acc[: seg.shape[0]] += seg
    return float(np.max(np.abs(acc - acc.mean())))


def reflect_index(n_samples: int, pad: int, length: int) -> np.ndarray:
    """Indices into a signal for positions ``-pad .. length - pad - 1``.

    Positions outside ``[0, n_samples)`` are mirrored without repeating the
    edge sample (numpy's ``reflect`` mode), repeating as often as needed.
    """
    pos = np.arange(length) - pad
    if n_samples == 1:
        return np.zeros(length, dtype=np.intp)
    period = 2 * (n_samples - 1)
    pos = np.mod(pos, period)
    return np.where(pos >= n_samples, period - pos, pos).astype(np.intp)


def frame_index(n_samples: int, frame_len: int, hop: int) -> np.ndarray:
    """(T, frame_len) gather indices for centered, reflect-padded framing."""
    n_frames = n_samples // hop + 1
    pad = frame_len // 2
    padded = reflect_index(n_samples, pad, n_samples + 2 * pad)
    starts = np.arange(n_frames) * hop
    return padded[starts[:, None] + np.arange(frame_len)[None, :]]


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("cannot frame an empty signal")
    return x[frame_index(x.shape[0], frame_len, hop)]


def _check_wave(wave: Waveform, cfg: FrameConfig) -> None:
    if len(wave) == 0:
        raise ValueError("empty waveform")
    if wave.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform sample rate {wave.sample_rate} != config sample rate {cfg.sample_rate}"
        )


def stft(wave: Waveform, cfg: FrameConfig = FrameConfig()) -> ComplexSpectrogram:
    _check_wave(wave, cfg)
    frames = frame_signal(wave.samples, cfg.fft_size, cfg.hop)
    spec = np.fft.rfft(frames * analysis_window(cfg), axis=-1)
    return ComplexSpectrogram(spec, cfg)


def magnitude(spec: ComplexSpectrogram) -> MagnitudeSpectrogram:
    return MagnitudeSpectrogram(np.abs(spec.frames), spec.config)


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Sum (T, L) frames placed ``hop`` apart; output length ``(T-1)*hop + L``."""
    n_frames, frame_len = frames.shape
    out = np.zeros((n_frames - 1) * hop + frame_len)
    for t in range(n_frames):
        out[t * hop:t * hop + frame_len] += frames[t]
    return out


def istft(
    spec: ComplexSpectrogram,
    cfg: FrameConfig | None = None,
    length: int | None = None,
) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    ``length`` defaults to ``(T - 1) * hop``; pass the original sample count to
    recover it exactly.
    """
    cfg = cfg or spec.config
    frames = np.asarray(spec.frames)
    if frames.ndim != 2 or frames.shape[1] != cfg.n_bins:
        raise ValueError(f"expected (T, {cfg.n_bins}) frames, got {frames.shape}")
    n_frames = frames.shape[0]
    if length is None:
        length = (n_frames - 1) * cfg.hop
    if length > n_frames * cfg.hop:
        raise ValueError(f"length {length} exceeds what {n_frames} frames can cover")
    w = analysis_window(cfg)
    num = overlap_add(np.fft.irfft(frames, n=cfg.fft_size, axis=-1) * w, cfg.hop)
    den = overlap_add(np.broadcast_to(w * w, (n_frames, cfg.fft_size)), cfg.hop)
    pad = cfg.fft_size // 2
    num, den = num[pad:pad + length], den[pad:pad + length]
    if np.any(den < 1e-10):
        raise ConfigError("window/hop combination does not satisfy overlap-add coverage")
    return Waveform(num / den, cfg.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _triangle_integral(x, lo, mid, hi):
    """Integral of the unit-peak triangle (lo, mid, hi) from -inf to x."""
    x = np.clip(x, lo, hi)
    left = (np.minimum(x, mid) - lo) ** 2 / (2.0 * (mid - lo))
    right = np.where(
        x > mid,
        ((hi - mid) ** 2 - (hi - x) ** 2) / (2.0 * (hi - mid)),
        0.0,
    )
    return left + right


def make_mel_filterbank(
    cfg: FrameConfig = FrameConfig(),
    n_mels: int = 80,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelFilterbank:
    """Triangular HTK-mel filterbank over the config's rfft bins.

    Each weight is the triangle's mean over the bin's frequency extent
    ``[f - df/2, f + df/2]`` rather than its value at the bin center. With
    80 bands on 129 bins the low triangles are narrower than one bin and
    point sampling would leave them empty; area sampling gives every band
    support while matching point sampling for wide triangles.
    """
    nyquist = cfg.sample_rate / 2.0
    if f_max is None:
        f_max = nyquist
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if not 0.0 <= f_min < f_max <= nyquist:
        raise ValueError(f"invalid frequency range [{f_min}, {f_max}] for nyquist {nyquist}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    df = cfg.sample_rate / cfg.fft_size
    freqs = cfg.bin_frequencies()
    lo, mid, hi = (edges[:-2, None], edges[1:-1, None], edges[2:, None])
    upper = _triangle_integral(freqs[None, :] + df / 2, lo, mid, hi)
    lower = _triangle_integral(freqs[None, :] - df / 2, lo, mid, hi)
    weights = (upper - lower) / df
    return MelFilterbank(weights, float(f_min), float(f_max), edges, freqs)


def mel_project(mag, fb: MelFilterbank) -> np.ndarray:
    frames = mag.frames if isinstance(mag, MagnitudeSpectrogram) else np.asarray(mag)
    if frames.shape[-1] != fb.weights.shape[1]:
        raise ValueError(
            f"magnitude has {frames.shape[-1]} bins, filterbank expects {fb.weights.shape[1]}"
        )
    return frames @ fb.weights.T


def _check_coverage(fb: MelFilterbank) -> None:
    inside = (fb.bin_hz >= fb.f_min) & (fb.bin_hz <= fb.f_max)
    empty = inside & (fb.weights.sum(axis=0) <= 0)
    if np.any(empty):
        raise ValueError(
            f"filterbank leaves bins {np.flatnonzero(empty).tolist()} inside "
            f"[{fb.f_min}, {fb.f_max}] Hz uncovered"
        )


def mel_pinv(fb: MelFilterbank, reg: float = 1e-8, rcond: float = 1e-4) -> np.ndarray:
    """(M, F) Tikhonov-regularized pseudo-inverse: ``linear = mel @ pinv``.

    Singular values below ``rcond * s_max`` count as zero (numerical rank).
    The default 80-band bank has one direction at s ~ 4e-6 where bands
    shrink to bin width; Tikhonov alone would amplify it several hundred
    times, making the decoded spectrum hypersensitive to those bands.
    """
    u, s, vt = np.linalg.svd(fb.weights, full_matrices=False)
    keep = s > rcond * s[0]
    gain = np.where(keep, s / (s**2 + reg), 0.0)
    return (u * gain) @ vt


def mel_to_linear(mel, fb: MelFilterbank, pinv: np.ndarray | None = None) -> np.ndarray:
    mel = np.asarray(mel, dtype=np.float64)
    if mel.shape[-1] != fb.n_mels:
        raise ValueError(f"mel has {mel.shape[-1]} bands, filterbank has {fb.n_mels}")
    if np.any(mel < 0):
        raise ValueError("mel magnitudes must be non-negative (exponentiate log-mel first)")
    if pinv is None:
        _check_coverage(fb)
        pinv = mel_pinv(fb)
    return np.maximum(mel @ pinv, 0.0)
