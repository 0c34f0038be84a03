"""Reference feature extraction: F0, band periodicity and log-mel envelope."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import (
    LOG_FLOOR,
    ConfigError,
    FrameConfig,
    MelFilterbank,
    Waveform,
    frame_signal,
    magnitude,
    make_mel_filterbank,
    mel_project,
    stft,
)

N_ENVELOPE = 80
N_PERIODICITY = 12
FEATURE_DIM = N_ENVELOPE + N_PERIODICITY + 1


@dataclass(frozen=True)
class F0Config:
    f0_min: float = 50.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.5
    window_seconds: float = 0.032

    def validate(self, sample_rate: int) -> None:
        if not 0 < self.f0_min < self.f0_max < sample_rate / 2:
            raise ConfigError(
                f"need 0 < f0_min < f0_max < {sample_rate / 2}, got {self.f0_min}, {self.f0_max}"
            )
        if not 0 < self.voicing_threshold < 1:
            raise ConfigError("voicing_threshold must lie in (0, 1)")

    def window_len(self, sample_rate: int) -> int:
        n = int(round(self.window_seconds * sample_rate))
        return n + (n % 2)

    def lag_range(self, sample_rate: int) -> tuple[int, int]:
        return (
            int(np.floor(sample_rate / self.f0_max)),
            int(np.ceil(sample_rate / self.f0_min)),
        )


@dataclass
class AcousticFeatures:
    f0: np.ndarray  # (T,)
    periodicity: np.ndarray  # (T, 12)
    envelope_logmel: np.ndarray  # (T, 80)
    config: FrameConfig = field(default_factory=FrameConfig)

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.periodicity = np.asarray(self.periodicity, dtype=np.float64)
        self.envelope_logmel = np.asarray(self.envelope_logmel, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        n = self.f0.shape[0]
        if self.f0.ndim != 1:
            raise ValueError(f"f0 must be 1-D, got shape {self.f0.shape}")
        if self.periodicity.ndim != 2 or self.periodicity.shape[0] != n:
            raise ValueError(f"periodicity shape {self.periodicity.shape} does not match T={n}")
        if self.envelope_logmel.ndim != 2 or self.envelope_logmel.shape[0] != n:
            raise ValueError(f"envelope shape {self.envelope_logmel.shape} does not match T={n}")
        for name in ("f0", "periodicity", "envelope_logmel"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.f0 < 0):
            raise ValueError("f0 must be non-negative (0 marks unvoiced)")

    @property
    def n_frames(self) -> int:
        return self.f0.shape[0]

    def copy(self) -> "AcousticFeatures":
        return AcousticFeatures(
            self.f0.copy(), self.periodicity.copy(), self.envelope_logmel.copy(), self.config
        )

    def to_array(self) -> np.ndarray:
        """(T, 1 + p + v) matrix laid out as ``[f0 | periodicity | envelope]``."""
        return np.column_stack([self.f0, self.periodicity, self.envelope_logmel])

    @classmethod
    def from_array(cls, arr, config: FrameConfig = FrameConfig(), n_periodicity=N_PERIODICITY):
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        return cls(
            arr[:, 0],
            arr[:, 1:1 + n_periodicity],
            arr[:, 1 + n_periodicity:],
            config,
        )


def default_filterbanks(cfg: FrameConfig = FrameConfig()) -> tuple[MelFilterbank, MelFilterbank]:
    """The 80-band envelope and 12-band periodicity filterbanks."""
    return make_mel_filterbank(cfg, N_ENVELOPE), make_mel_filterbank(cfg, N_PERIODICITY)


def _lag_products(frames: np.ndarray, max_lag: int):
    """Per-frame autocorrelation r[tau] and the two partial energies.

    For a frame x of length L and lag tau the sums run over j in
    [0, L - tau): ``r = sum x_j x_{j+tau}``, ``e_head = sum x_j**2``,
    ``e_tail = sum x_{j+tau}**2``.
    """
    n = frames.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frames, n=nfft, axis=-1)
    r = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=-1)[..., :max_lag + 1]
    sq = np.concatenate([np.zeros(frames.shape[:-1] + (1,)), np.cumsum(frames**2, axis=-1)], -1)
    lags = np.arange(max_lag + 1)
    e_head = sq[..., n - lags]
    e_tail = sq[..., n:n + 1] - sq[..., lags]
    return r, e_head, e_tail


def _cmnd_from_products(r, e_head, e_tail) -> np.ndarray:
    """Cumulative-mean-normalized difference function (YIN), lags 0..max_lag."""
    max_lag = r.shape[-1] - 1
    diff = np.maximum(e_head + e_tail - 2.0 * r, 0.0)
    diff[..., 0] = 0.0
    cum = np.cumsum(diff[..., 1:], axis=-1)
    lags = np.arange(1, max_lag + 1)
    out = np.ones_like(diff)
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = diff[..., 1:] * lags / cum
    out[..., 1:] = np.where(cum > 0, norm, 1.0)
    return out


def extract_f0(
    wave: Waveform,
    cfg: FrameConfig = FrameConfig(),
    f0cfg: F0Config = F0Config(),
    absolute_threshold: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """YIN-style F0 per hop with parabolic refinement.

    The lag is picked on the cumulative-mean-normalized difference: the
    first dip below ``absolute_threshold`` (guards against octave-down
    errors), else the global minimum. Confidence is the normalized
    autocorrelation at that lag, so it is amplitude-free and sits near 0
    for noise and near 1 for periodic frames.
    """
    if len(wave) == 0:
        raise ValueError("empty waveform")
    if wave.sample_rate != cfg.sample_rate:
        raise ConfigError("waveform sample rate does not match config")
    f0cfg.validate(cfg.sample_rate)
    sr = cfg.sample_rate
    frames = frame_signal(wave.samples, f0cfg.window_len(sr), cfg.hop)
    lag_min, lag_max = f0cfg.lag_range(sr)
    lag_max = min(lag_max, frames.shape[1] - 2)
    r, e_head, e_tail = _lag_products(frames, lag_max + 1)
    d = _cmnd_from_products(r, e_head, e_tail)

    search = d[:, lag_min:lag_max + 1]
    n_frames = frames.shape[0]
    below = search < absolute_threshold
    # first index where the dip below threshold bottoms out
    choice = np.argmin(search, axis=1)
    for t in np.flatnonzero(below.any(axis=1)):
        i = int(np.argmax(below[t]))
        while i + 1 < search.shape[1] and search[t, i + 1] < search[t, i]:
            i += 1
        choice[t] = i
    tau = choice + lag_min
    rows = np.arange(n_frames)
    best = d[rows, tau]

    left = d[rows, np.maximum(tau - 1, 1)]
    right = d[rows, np.minimum(tau + 1, d.shape[1] - 1)]
    curvature = left - 2.0 * best + right
    with np.errstate(invalid="ignore", divide="ignore"):
        shift = np.where(curvature > 0, 0.5 * (left - right) / curvature, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    tau_frac = tau + shift

    with np.errstate(invalid="ignore", divide="ignore"):
        nccf = np.where(
            (e_head > 0) & (e_tail > 0), r / np.sqrt(e_head * e_tail), 0.0
        )
    lo_lag = np.floor(tau_frac).astype(int)
    frac = tau_frac - lo_lag
    confidence = (1.0 - frac) * nccf[rows, lo_lag] + frac * nccf[rows, lo_lag + 1]
    confidence = np.clip(confidence, 0.0, 1.0)
    f0 = sr / tau_frac
    voiced = (
        (confidence >= f0cfg.voicing_threshold)
        & (f0 >= f0cfg.f0_min)
        & (f0 <= f0cfg.f0_max)
    )
    return np.where(voiced, f0, 0.0), confidence


def _band_masks(fb: MelFilterbank, freqs: np.ndarray) -> np.ndarray:
    lo, hi = fb.edges_hz[:-2, None], fb.edges_hz[2:, None]
    return (freqs[None, :] > lo) & (freqs[None, :] < hi)


def extract_periodicity(
    wave: Waveform,
    f0: np.ndarray,
    cfg: FrameConfig = FrameConfig(),
    fb12: MelFilterbank | None = None,
    f0cfg: F0Config = F0Config(),
) -> np.ndarray:
    """Per-band normalized autocorrelation at the F0 period, in [0, 1].

    Each analysis frame is band-passed by zeroing FFT bins outside a band's
    triangle support; the band's periodicity is the normalized
    autocorrelation of the band signal at lag ``sample_rate / f0``
    (linearly interpolated between integer lags). Unvoiced frames get zeros.
    """
    fb12 = fb12 if fb12 is not None else make_mel_filterbank(cfg, N_PERIODICITY)
    f0 = np.asarray(f0, dtype=np.float64)
    n_frames = cfg.n_frames(len(wave))
    if f0.shape != (n_frames,):
        raise ValueError(f"f0 has shape {f0.shape}, framing gives ({n_frames},)")
    out = np.zeros((n_frames, fb12.n_mels))
    voiced = np.flatnonzero(f0 > 0)
    if voiced.size == 0:
        return out

    sr = cfg.sample_rate
    win = f0cfg.window_len(sr)
    frames = frame_signal(wave.samples, win, cfg.hop)[voiced]
    masks = _band_masks(fb12, np.fft.rfftfreq(win, 1.0 / sr))
    spec = np.fft.rfft(frames, axis=-1)
    bands = np.fft.irfft(spec[:, None, :] * masks[None, :, :], n=win, axis=-1)

    lag = sr / f0[voiced]
    lo = np.floor(lag).astype(int)
    frac = lag - lo
    max_lag = int(lo.max()) + 1
    if max_lag >= win:
        raise ValueError(f"F0 period {max_lag} samples exceeds the analysis window {win}")
    r, e_head, e_tail = _lag_products(bands, max_lag)

    def rho(k):
        idx = k[:, None, None]
        num = np.take_along_axis(r, idx, -1)[..., 0]
        den = np.sqrt(
            np.take_along_axis(e_head, idx, -1)[..., 0] * np.take_along_axis(e_tail, idx, -1)[..., 0]
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, num / den, 0.0)

    value = (1.0 - frac)[:, None] * rho(lo) + frac[:, None] * rho(lo + 1)
    out[voiced] = np.clip(value, 0.0, 1.0)
    return out


def extract_envelope(
    wave: Waveform, cfg: FrameConfig = FrameConfig(), fb80: MelFilterbank | None = None
) -> np.ndarray:
    fb80 = fb80 if fb80 is not None else make_mel_filterbank(cfg, N_ENVELOPE)
    mel = mel_project(magnitude(stft(wave, cfg)), fb80)
    return np.log(np.maximum(mel, LOG_FLOOR))


def analyze(
    wave: Waveform,
    cfg: FrameConfig = FrameConfig(),
    f0cfg: F0Config = F0Config(),
    fb80: MelFilterbank | None = None,
    fb12: MelFilterbank | None = None,
) -> AcousticFeatures:
    f0, _ = extract_f0(wave, cfg, f0cfg)
    periodicity = extract_periodicity(wave, f0, cfg, fb12, f0cfg)
    envelope = extract_envelope(wave, cfg, fb80)
    return AcousticFeatures(f0, periodicity, envelope, cfg)
