"""Source-filter synthesis with zero-phase per-frame filters.

Frame ``t`` owns a ``fft_size``-sample segment centered on sample
``t * hop``. Its periodic part is the Hann-windowed impulse train over that
segment, filtered by multiplying its spectrum with the real, non-negative
response ``P * V``; its aperiodic part is frequency-domain white noise
shaped by ``(1 - P) * V`` and windowed by a square-root Hann. Both windows
overlap-add to unity at 50% overlap, so the two branches carry the same
expected power for a flat response.

Offline output covers samples ``[0, T * hop)``. The streaming synthesizer
produces the identical signal delayed by one hop: a frame's segment reaches
one hop into the future, so the block ending at a frame's center is only
final once that frame has arrived.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .analysis import N_ENVELOPE, N_PERIODICITY, AcousticFeatures
from .signal import (
    LOG_FLOOR,
    ConfigError,
    FrameConfig,
    MelFilterbank,
    Waveform,
    make_mel_filterbank,
    make_window,
    mel_pinv,
)

LOG_FLOOR_VALUE = float(np.log(LOG_FLOOR))
_PHASE_EPS = 1e-9


@dataclass(frozen=True)
class SynthConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    noise_seed: int = 0
    excitation_norm: str = "per_frame_rms"
    f0_interp: str = "hold"

    def __post_init__(self):
        fr = self.frame
        if not (fr.window_len == fr.fft_size == 2 * fr.hop):
            raise ConfigError(
                "the vocoder needs window_len == fft_size == 2 * hop, got "
                f"window_len={fr.window_len}, fft_size={fr.fft_size}, hop={fr.hop}"
            )
        if self.excitation_norm != "per_frame_rms":
            raise ConfigError(f"unsupported excitation_norm {self.excitation_norm!r}")
        if self.f0_interp not in ("hold", "linear"):
            raise ConfigError(f"unsupported f0_interp {self.f0_interp!r}")


class SynthPlan:
    """Precomputed per-config matrices: filterbanks, pseudo-inverse, windows."""

    def __init__(self, cfg: FrameConfig, fb80: MelFilterbank | None = None,
                 fb12: MelFilterbank | None = None):
        self.cfg = cfg
        self.fb80 = fb80 if fb80 is not None else make_mel_filterbank(cfg, N_ENVELOPE)
        self.fb12 = fb12 if fb12 is not None else make_mel_filterbank(cfg, N_PERIODICITY)
        for fb in (self.fb80, self.fb12):
            if fb.weights.shape[1] != cfg.n_bins:
                raise ValueError(
                    f"filterbank has {fb.weights.shape[1]} bins, config has {cfg.n_bins}"
                )
        self.pinv = mel_pinv(self.fb80)
        centers = self.fb12.centers_hz
        pos = np.interp(cfg.bin_frequencies(), centers, np.arange(centers.size))
        self.lo = np.floor(pos).astype(int)
        self.hi = np.minimum(self.lo + 1, centers.size - 1)
        self.frac = pos - self.lo
        self.window = make_window(cfg.window_kind, cfg.fft_size)
        self.noise_window = np.sqrt(self.window)
        # envelope values are STFT magnitudes; dividing by the analysis
        # window's energy turns them into per-sample amplitude gains
        self.gain = 1.0 / np.sqrt(np.sum(self.window**2))


@functools.lru_cache(maxsize=8)
def default_plan(cfg: FrameConfig) -> SynthPlan:
    return SynthPlan(cfg)


def _plan_for(cfg: FrameConfig, fb80=None, fb12=None) -> SynthPlan:
    if fb80 is None and fb12 is None:
        return default_plan(cfg)
    return SynthPlan(cfg, fb80, fb12)


def envelope_to_mel(logmel) -> np.ndarray:
    """exp of the log-mel envelope; entries at or below the log floor decode to 0."""
    logmel = np.asarray(logmel, dtype=np.float64)
    return np.where(logmel > LOG_FLOOR_VALUE, np.exp(logmel), 0.0)


def periodicity_to_bins(periodicity, plan: SynthPlan) -> np.ndarray:
    """Piecewise-linear band-center interpolation onto the rfft bins."""
    p = np.asarray(periodicity, dtype=np.float64)
    p_lo, p_hi = p[..., plan.lo], p[..., plan.hi]
    return np.clip(p_lo + plan.frac * (p_hi - p_lo), 0.0, 1.0)


def frame_filters(
    features: AcousticFeatures,
    fb80: MelFilterbank | None = None,
    fb12: MelFilterbank | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(periodic_mag, aperiodic_mag), each (T, n_bins), real and non-negative."""
    return _filters(features, _plan_for(features.config, fb80, fb12))


def _filters(features: AcousticFeatures, plan: SynthPlan):
    _check_features(features, plan)
    v_lin = np.maximum(envelope_to_mel(features.envelope_logmel) @ plan.pinv, 0.0)
    p_bins = periodicity_to_bins(features.periodicity, plan)
    return p_bins * v_lin, (1.0 - p_bins) * v_lin


def _check_features(features: AcousticFeatures, plan: SynthPlan) -> None:
    features.validate()
    if features.config != plan.cfg:
        raise ConfigError("feature frame config does not match the synthesis config")
    if features.envelope_logmel.shape[1] != plan.fb80.n_mels:
        raise ValueError(
            f"envelope has {features.envelope_logmel.shape[1]} bands, expected {plan.fb80.n_mels}"
        )
    if features.periodicity.shape[1] != plan.fb12.n_mels:
        raise ValueError(
            f"periodicity has {features.periodicity.shape[1]} bands, expected {plan.fb12.n_mels}"
        )


def _impulse_block(phase: float, f0_prev: float, f0_cur: float, hop: int,
                   sample_rate: int, interp: str) -> tuple[np.ndarray, float]:
    """One hop of impulse train; returns (block, phase after the block).

    An impulse lands on every sample where the running phase crosses an
    integer. Its amplitude ``sqrt(sample_rate / f0)`` gives unit mean power
    over each period, matching the unit-variance noise branch.
    """
    block = np.zeros(hop)
    if f0_cur <= 0.0:
        return block, 0.0
    if interp == "linear" and f0_prev > 0.0:
        f0 = f0_prev + (f0_cur - f0_prev) * (np.arange(1, hop + 1) / hop)
    else:
        f0 = np.full(hop, f0_cur)
    phi = phase + np.cumsum(f0 / sample_rate)
    whole = np.floor(phi + _PHASE_EPS)
    prev = np.concatenate([[np.floor(phase + _PHASE_EPS)], whole[:-1]])
    hits = whole > prev
    block[hits] = np.sqrt(sample_rate / f0[hits])
    return block, max(float(phi[-1] - whole[-1]), 0.0)


def impulse_train(f0, cfg: SynthConfig = SynthConfig()) -> Waveform:
    """Impulse excitation of length ``T * hop``; hop ``b`` follows ``f0[b]``."""
    f0 = np.asarray(f0, dtype=np.float64)
    if np.any(f0 < 0) or not np.all(np.isfinite(f0)):
        raise ValueError("f0 must be finite and non-negative")
    fr = cfg.frame
    out = np.zeros(f0.shape[0] * fr.hop)
    phase, prev = 0.0, 0.0
    for b, cur in enumerate(f0):
        block, phase = _impulse_block(phase, prev, float(cur), fr.hop, fr.sample_rate, cfg.f0_interp)
        out[b * fr.hop:(b + 1) * fr.hop] = block
        prev = float(cur)
    return Waveform(out, fr.sample_rate)


def _draw_noise(rng: np.random.Generator, n_frames: int, fft_size: int) -> np.ndarray:
    n_bins = fft_size // 2 + 1
    z = rng.standard_normal((n_frames, n_bins, 2))
    # E|X_k|^2 = fft_size for unit-variance white noise; DC/Nyquist are real
    spec = (z[..., 0] + 1j * z[..., 1]) * np.sqrt(fft_size / 2.0)
    spec[:, 0] = z[:, 0, 0] * np.sqrt(fft_size)
    spec[:, -1] = z[:, -1, 0] * np.sqrt(fft_size)
    return spec


def noise_excitation(n_frames: int, cfg: SynthConfig = SynthConfig()) -> np.ndarray:
    """(T, n_bins) complex white noise whose inverse rfft has unit variance."""
    if n_frames < 1:
        raise ValueError(f"need at least one frame, got {n_frames}")
    rng = np.random.default_rng(cfg.noise_seed)
    return _draw_noise(rng, n_frames, cfg.frame.fft_size)


class Excitation(NamedTuple):
    impulses: np.ndarray  # (T * hop,)
    periodic_spec: np.ndarray  # (T, n_bins) rfft of the windowed impulse segments
    noise_spec: np.ndarray  # (T, n_bins)


def excitation(f0, cfg: SynthConfig, plan: SynthPlan) -> Excitation:
    hop = cfg.frame.hop
    imp = impulse_train(f0, cfg).samples
    padded = np.concatenate([np.zeros(hop), imp])
    segs = np.lib.stride_tricks.sliding_window_view(padded, 2 * hop)[::hop]
    spec = np.fft.rfft(segs * plan.window, axis=-1)
    noise = noise_excitation(len(f0), cfg)
    return Excitation(imp, spec, noise)


def branch_segments(periodic_mag, aperiodic_mag, exc: Excitation, plan: SynthPlan):
    """Per-frame (T, fft_size) periodic and aperiodic output segments."""
    n, g = plan.cfg.fft_size, plan.gain
    seg_p = np.fft.irfft(g * periodic_mag * exc.periodic_spec, n=n, axis=-1)
    seg_a = np.fft.irfft(g * aperiodic_mag * exc.noise_spec, n=n, axis=-1) * plan.noise_window
    return seg_p, seg_a


def overlap_add_centered(segs: np.ndarray, hop: int) -> np.ndarray:
    """Overlap-add (T, 2*hop) segments centered at ``t * hop``; length ``T * hop``."""
    n_frames = segs.shape[0]
    full = np.zeros((n_frames + 1) * hop)
    full[:n_frames * hop] += segs[:, :hop].ravel()
    full[hop:] += segs[:, hop:].ravel()
    return full[hop:]


def synthesize_branches(
    features: AcousticFeatures,
    cfg: SynthConfig | None = None,
    fb80: MelFilterbank | None = None,
    fb12: MelFilterbank | None = None,
) -> tuple[Waveform, Waveform]:
    cfg = cfg or SynthConfig(frame=features.config)
    plan = _plan_for(cfg.frame, fb80, fb12)
    periodic_mag, aperiodic_mag = _filters(features, plan)
    exc = excitation(features.f0, cfg, plan)
    seg_p, seg_a = branch_segments(periodic_mag, aperiodic_mag, exc, plan)
    hop, sr = cfg.frame.hop, cfg.frame.sample_rate
    return (
        Waveform(overlap_add_centered(seg_p, hop), sr),
        Waveform(overlap_add_centered(seg_a, hop), sr),
    )


def synthesize(
    features: AcousticFeatures,
    cfg: SynthConfig | None = None,
    fb80: MelFilterbank | None = None,
    fb12: MelFilterbank | None = None,
) -> Waveform:
    """Offline synthesis; output length is ``T * hop``."""
    periodic, aperiodic = synthesize_branches(features, cfg, fb80, fb12)
    return Waveform(periodic.samples + aperiodic.samples, periodic.sample_rate)


@dataclass
class ExcitationState:
    config: SynthConfig
    phase_accumulator: float = 0.0
    prev_f0: float = 0.0
    prev_impulses: np.ndarray = None
    overlap_tail: np.ndarray = None
    rng: np.random.Generator = None
    frames_seen: int = 0

    @classmethod
    def initial(cls, cfg: SynthConfig) -> "ExcitationState":
        hop = cfg.frame.hop
        return cls(
            config=cfg,
            prev_impulses=np.zeros(hop),
            overlap_tail=np.zeros(cfg.frame.window_len - hop),
            rng=np.random.default_rng(cfg.noise_seed),
        )


def stream_step(f0: float, periodicity_row, envelope_row, state: ExcitationState,
                cfg: SynthConfig, plan: SynthPlan) -> np.ndarray:
    """Consume one feature frame, update ``state`` in place, return ``hop`` samples."""
    if state.config != cfg:
        raise ConfigError("synthesis config changed mid-stream")
    f0 = float(f0)
    if f0 < 0 or not np.isfinite(f0):
        raise ValueError(f"invalid f0 {f0}")
    hop = cfg.frame.hop
    p_row = np.asarray(periodicity_row, dtype=np.float64)[None, :]
    v_row = np.asarray(envelope_row, dtype=np.float64)[None, :]
    if p_row.shape[1] != plan.fb12.n_mels or v_row.shape[1] != plan.fb80.n_mels:
        raise ValueError("frame feature dimensions do not match the filterbanks")

    block, state.phase_accumulator = _impulse_block(
        state.phase_accumulator, state.prev_f0, f0, hop, cfg.frame.sample_rate, cfg.f0_interp
    )
    seg = np.concatenate([state.prev_impulses, block])[None, :]
    periodic_spec = np.fft.rfft(seg * plan.window, axis=-1)
    noise = _draw_noise(state.rng, 1, cfg.frame.fft_size)

    v_lin = np.maximum(envelope_to_mel(v_row) @ plan.pinv, 0.0)
    p_bins = periodicity_to_bins(p_row, plan)
    exc = Excitation(block, periodic_spec, noise)
    seg_p, seg_a = branch_segments(p_bins * v_lin, (1.0 - p_bins) * v_lin, exc, plan)
    out_seg = (seg_p + seg_a)[0]

    out = state.overlap_tail + out_seg[:hop]
    state.overlap_tail = out_seg[hop:].copy()
    state.prev_impulses = block
    state.prev_f0 = f0
    state.frames_seen += 1
    return out


class StreamingSynthesizer:
    """Causal frame-by-frame synthesis, one ``hop`` of audio per pushed frame.

    Output is the offline signal delayed by ``latency_samples`` (one hop).
    Not safe for concurrent ``push`` calls.
    """

    def __init__(self, cfg: SynthConfig = SynthConfig(), fb80=None, fb12=None):
        self.cfg = cfg
        self.plan = _plan_for(cfg.frame, fb80, fb12)
        self.state = ExcitationState.initial(cfg)

    @property
    def latency_samples(self) -> int:
        return self.cfg.frame.hop

    def reset(self) -> None:
        self.state = ExcitationState.initial(self.cfg)

    def push(self, f0, periodicity_row, envelope_row) -> np.ndarray:
        return stream_step(f0, periodicity_row, envelope_row, self.state, self.cfg, self.plan)

    def flush(self) -> np.ndarray:
        """Emit the remaining tail (the last frame's second half)."""
        out = self.state.overlap_tail.copy()
        self.state.overlap_tail = np.zeros_like(out)
        return out

    def process(self, features: AcousticFeatures, flush: bool = True) -> Waveform:
        blocks = [
            self.push(f, p, v)
            for f, p, v in zip(features.f0, features.periodicity, features.envelope_logmel)
        ]
        if flush:
            blocks.append(self.flush())
        return Waveform(np.concatenate(blocks), self.cfg.frame.sample_rate)
