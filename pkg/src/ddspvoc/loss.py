"""Generator objective: feature MSEs, multi-resolution STFT loss, sub-band adversarial term."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import LOG_FLOOR, Waveform, frame_index, make_window

ADV_FORMS = ("least_squares", "as_printed")


@dataclass(frozen=True)
class LossConfig:
    windows: tuple[int, ...] = (512, 1024, 2048)
    weights: tuple[float, ...] = (25.7, 51.3, 102.5)
    loss_hop: int = 128
    alpha: float = 1.0
    beta: float = 1.0
    adv_form: str = "least_squares"
    n_bands: int = 16
    n_bins: int = 129

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.windows) != len(self.weights):
            raise ValueError(
                f"{len(self.windows)} windows but {len(self.weights)} weights"
            )
        if any(w < 2 for w in self.windows):
            raise ValueError("loss windows must be at least 2 samples")
        if any(lam <= 0 for lam in self.weights):
            raise ValueError("loss weights must be positive")
        if self.loss_hop < 1:
            raise ValueError("loss_hop must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.adv_form not in ADV_FORMS:
            raise ValueError(f"adv_form must be one of {ADV_FORMS}, got {self.adv_form!r}")
        if not 1 <= self.n_bands <= self.n_bins:
            raise ValueError(f"need 1 <= n_bands <= n_bins, got {self.n_bands}")


@dataclass(frozen=True)
class BandPartition:
    ranges: tuple[tuple[int, int], ...]  # half-open bin ranges

    @property
    def sizes(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.ranges])

    @property
    def n_bands(self) -> int:
        return len(self.ranges)


@dataclass(frozen=True)
class DiscriminatorScores:
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise ValueError("discriminator scores must be finite")
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.scores.shape[0]


def make_band_partition(n_bins: int = 129, n_bands: int = 16) -> BandPartition:
    """Contiguous near-equal split; the first ``n_bins % n_bands`` bands get one extra bin."""
    if n_bands < 1 or n_bands > n_bins:
        raise ValueError(f"cannot split {n_bins} bins into {n_bands} bands")
    base, extra = divmod(n_bins, n_bands)
    sizes = [base + 1] * extra + [base] * (n_bands - extra)
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return BandPartition(tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))


def _loss_stft(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    idx = frame_index(x.shape[0], window, hop)
    return np.fft.rfft(x[idx] * make_window("hann", window), axis=-1)


def log_mag(wave, window: int, loss_hop: int = 128) -> np.ndarray:
    """Natural-log STFT magnitude, floored at ``LOG_FLOOR``, shape (T, window // 2 + 1)."""
    if window < 2:
        raise ValueError(f"window must be at least 2 samples, got {window}")
    x = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty waveform")
    return np.log(np.maximum(np.abs(_loss_stft(x, window, loss_hop)), LOG_FLOOR))


def _check_pair(s_hat, s):
    if isinstance(s_hat, Waveform) and isinstance(s, Waveform):
        if s_hat.sample_rate != s.sample_rate:
            raise ValueError(f"sample rates differ: {s_hat.sample_rate} vs {s.sample_rate}")
    a = s_hat.samples if isinstance(s_hat, Waveform) else np.asarray(s_hat, dtype=np.float64)
    b = s.samples if isinstance(s, Waveform) else np.asarray(s, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def mrs_terms(s_hat, s, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Per-resolution weighted terms ``lambda_i * |f_hat - f|_1 / |f_hat|_1``."""
    a, b = _check_pair(s_hat, s)
    terms = []
    for window, lam in zip(cfg.windows, cfg.weights):
        fa = log_mag(a, window, cfg.loss_hop)
        fb = log_mag(b, window, cfg.loss_hop)
        denom = np.abs(fa).sum()
        assert denom > 0, "log floor keeps the denominator positive"
        terms.append(lam * np.abs(fa - fb).sum() / denom)
    return np.array(terms)


def mrs_loss(s_hat, s, cfg: LossConfig = LossConfig()) -> float:
    """Multi-resolution STFT loss, normalized by the estimate's log-magnitude L1 norm.

    Not symmetric in its arguments.
    """
    return float(mrs_terms(s_hat, s, cfg).sum())


def feature_mse(x_hat, x) -> float:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    if x.size == 0:
        return 0.0
    return float(np.mean((x_hat - x) ** 2))


def adv_generator_loss(
    d: DiscriminatorScores,
    bands: BandPartition | None = None,
    cfg: LossConfig = LossConfig(),
) -> float:
    bands = bands or make_band_partition(cfg.n_bins, cfg.n_bands)
    scores = d.scores if isinstance(d, DiscriminatorScores) else np.asarray(d, dtype=np.float64)
    if scores.shape[0] != bands.n_bands:
        raise ValueError(f"{scores.shape[0]} scores for {bands.n_bands} bands")
    resid = scores - 1.0
    if cfg.adv_form == "least_squares":
        resid = resid**2
    return float(np.sum(resid / bands.sizes))


def generator_loss(
    feat_hat,
    feat_ref,
    s_hat,
    s,
    d_scores: DiscriminatorScores | None = None,
    cfg: LossConfig = LossConfig(),
    bands: BandPartition | None = None,
) -> tuple[float, dict]:
    """Weighted sum of F0 MSE, periodicity MSE, MRS loss and adversarial term."""
    f0_term = cfg.alpha * feature_mse(feat_hat.f0, feat_ref.f0)
    p_term = cfg.beta * feature_mse(feat_hat.periodicity, feat_ref.periodicity)
    mrs = mrs_terms(s_hat, s, cfg)
    adv = 0.0 if d_scores is None else adv_generator_loss(d_scores, bands, cfg)
    breakdown = {
        "f0": f0_term,
        "periodicity": p_term,
        "mrs": float(mrs.sum()),
        "adv": adv,
    }
    for window, term in zip(cfg.windows, mrs):
        breakdown[f"mrs_{window}"] = float(term)
    total = f0_term + p_term + breakdown["mrs"] + adv
    return total, breakdown
