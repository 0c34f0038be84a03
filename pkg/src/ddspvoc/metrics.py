"""Evaluation metrics: MCD with DTW alignment, spectrogram SSIM, SNR mixing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .analysis import N_ENVELOPE, extract_envelope
from .signal import FrameConfig, MelFilterbank, Waveform, make_mel_filterbank

MCD_CONST = 10.0 * np.sqrt(2.0) / np.log(10.0)
SNR_INF = float("inf")
SNR_GATE_DB = 100.0
SSIM_WIN = 7


@dataclass(frozen=True)
class MccSequence:
    frames: np.ndarray  # (T, C), c0 excluded
    config: FrameConfig

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2:
            raise ValueError(f"MCC frames must be 2-D, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("MCC frames contain non-finite values")
        object.__setattr__(self, "frames", f)

    @property
    def n_coeffs(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class DtwPath:
    pairs: np.ndarray  # (K, 2) index pairs
    cost: float  # mean local distance along the path

    def __len__(self):
        return self.pairs.shape[0]


def _check_cfg(wave: Waveform, cfg: FrameConfig) -> None:
    if wave.sample_rate != cfg.sample_rate:
        raise ValueError(f"waveform at {wave.sample_rate} Hz, config expects {cfg.sample_rate} Hz")
    if len(wave) == 0:
        raise ValueError("empty waveform")


def mcc(wave: Waveform, cfg: FrameConfig = FrameConfig(), fb80: MelFilterbank | None = None,
        n_coeffs: int = 13) -> MccSequence:
    """Orthonormal DCT-II of each log-mel frame, coefficients 1..C."""
    _check_cfg(wave, cfg)
    fb80 = fb80 if fb80 is not None else make_mel_filterbank(cfg, N_ENVELOPE)
    if not 1 <= n_coeffs < fb80.n_mels:
        raise ValueError(f"n_coeffs must lie in [1, {fb80.n_mels - 1}], got {n_coeffs}")
    logmel = extract_envelope(wave, cfg, fb80)
    coeffs = dct(logmel, type=2, norm="ortho", axis=-1)
    return MccSequence(coeffs[:, 1:n_coeffs + 1], cfg)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # direct differences, not the a^2 + b^2 - 2ab expansion, so d(x, x) == 0 exactly
    out = np.empty((a.shape[0], b.shape[0]))
    for i, row in enumerate(a):
        out[i] = np.sqrt(np.sum((b - row) ** 2, axis=1))
    return out


def dtw(dist: np.ndarray) -> DtwPath:
    """Unconstrained DTW over a local-distance matrix, steps (1,0), (0,1), (1,1).

    Ties prefer the diagonal, then the vertical move. Returns the path and
    the mean local distance along it.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or 0 in dist.shape:
        raise ValueError(f"need a non-empty 2-D distance matrix, got shape {dist.shape}")
    n, m = dist.shape
    acc = np.full((n, m), np.inf)
    acc[0] = np.cumsum(dist[0])
    for i in range(1, n):
        # diagonal and vertical predecessors are vectorized; the horizontal
        # recurrence is a running minimum over (acc - prefix) terms
        best = np.minimum(acc[i - 1], np.concatenate([[np.inf], acc[i - 1, :-1]]))
        prefix = np.cumsum(dist[i])
        acc[i] = prefix + np.minimum.accumulate(best - prefix + dist[i])

    pairs = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            moves = (acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            k = int(np.argmin(moves))
            i, j = (i - 1, j - 1) if k == 0 else (i - 1, j) if k == 1 else (i, j - 1)
        pairs.append((i, j))
    pairs = np.array(pairs[::-1])
    cost = float(dist[pairs[:, 0], pairs[:, 1]].mean())
    return DtwPath(pairs, cost)


def mcd_dtw(s_hat: Waveform, s: Waveform, cfg: FrameConfig = FrameConfig(),
            fb80: MelFilterbank | None = None, n_coeffs: int = 13) -> float:
    """Mel cepstral distortion in dB along the DTW path (path mean)."""
    fb80 = fb80 if fb80 is not None else make_mel_filterbank(cfg, N_ENVELOPE)
    a = mcc(s_hat, cfg, fb80, n_coeffs).frames
    b = mcc(s, cfg, fb80, n_coeffs).frames
    return float(MCD_CONST * dtw(pairwise_distances(a, b)).cost)


def _box_mean(x: np.ndarray, k: int) -> np.ndarray:
    """Mean over every k x k window (valid region) via a summed-area table."""
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(x, 0), 1)
    return (s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]) / (k * k)


def ssim_image(x: np.ndarray, y: np.ndarray, win: int = SSIM_WIN, data_range: float = 1.0) -> float:
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if min(x.shape) < win:
        raise ValueError(f"images of shape {x.shape} are smaller than the {win}x{win} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = _box_mean(x, win), _box_mean(y, win)
    # unbiased local (co)variances, as in the reference SSIM code
    scale = win * win / (win * win - 1.0)
    vx = scale * (_box_mean(x * x, win) - mx * mx)
    vy = scale * (_box_mean(y * y, win) - my * my)
    cxy = scale * (_box_mean(x * y, win) - mx * my)
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx**2 + my**2 + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def spectrogram_ssim(s_hat: Waveform, s: Waveform, cfg: FrameConfig = FrameConfig(),
                     fb80: MelFilterbank | None = None) -> float:
    """Mean 7x7 SSIM between log-mel spectrograms scaled jointly to [0, 1]."""
    if len(s_hat) != len(s):
        raise ValueError(f"length mismatch: {len(s_hat)} vs {len(s)}")
    _check_cfg(s_hat, cfg)
    _check_cfg(s, cfg)
    fb80 = fb80 if fb80 is not None else make_mel_filterbank(cfg, N_ENVELOPE)
    a = extract_envelope(s_hat, cfg, fb80)
    b = extract_envelope(s, cfg, fb80)
    lo = min(a.min(), b.min())
    span = max(a.max(), b.max()) - lo
    if span == 0:
        # both constant and equal (e.g. two silences)
        return 1.0
    return ssim_image((a - lo) / span, (b - lo) / span)


def _energy(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """``clean + g * noise`` with g set so the energy ratio equals ``snr_db``.

    Noise is truncated to the clean length. At or above 100 dB the clean
    signal is returned unchanged.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError(f"sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    if len(noise) < len(clean):
        raise ValueError(f"noise has {len(noise)} samples, clean needs {len(clean)}")
    if np.isnan(snr_db):
        raise ValueError("snr_db is NaN")
    c = clean.samples
    n = noise.samples[:len(c)]
    e_c, e_n = _energy(c), _energy(n)
    if e_c == 0:
        raise ValueError("clean signal has zero energy")
    if e_n == 0:
        raise ValueError("noise has zero energy over the clean length")
    if snr_db >= SNR_GATE_DB:
        return Waveform(c.copy(), clean.sample_rate)
    gain = np.sqrt(e_c / (e_n * 10.0 ** (snr_db / 10.0)))
    return Waveform(c + gain * n, clean.sample_rate)


def measured_snr(mix: Waveform, clean: Waveform) -> float:
    if len(mix) != len(clean):
        raise ValueError(f"length mismatch: {len(mix)} vs {len(clean)}")
    resid = _energy(mix.samples - clean.samples)
    if resid == 0:
        return SNR_INF
    return float(10.0 * np.log10(_energy(clean.samples) / resid))
