"""Analytic gradients of the MRS loss w.r.t. envelope and periodicity.

Only the fixed synthesis-to-loss graph is differentiated. The excitation
(impulse train and noise) depends on F0 and the seed only, so it is
computed once and treated as constant; F0 gets no waveform gradient.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .analysis import AcousticFeatures
from .loss import LossConfig, _loss_stft
from .signal import LOG_FLOOR, Waveform, frame_index, make_window
from .vocoder import (
    SynthConfig,
    _check_features,
    _plan_for,
    envelope_to_mel,
    excitation,
    overlap_add_centered,
)


@dataclass
class FeatureGradients:
    d_envelope: np.ndarray  # (T, 80)
    d_periodicity: np.ndarray  # (T, 12)


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 1e-2
    steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clamp_periodicity: bool = True
    # linear decay from step_size to this value over the run; None keeps it constant
    final_step_size: float | None = None

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.final_step_size is not None and self.final_step_size < 0:
            raise ValueError("final_step_size must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment decay rates must lie in [0, 1)")


def _irfft_adjoint(dz: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of ``rfft``: maps dL/d(Re X) + i dL/d(Im X) back to the frame."""
    y = dz / 2.0
    y[..., 0] = dz[..., 0]
    y[..., -1] = dz[..., -1]
    return n * np.fft.irfft(y, n=n, axis=-1)


def _bin_multiplicity(n_bins: int) -> np.ndarray:
    c = np.full(n_bins, 2.0)
    c[0] = c[-1] = 1.0
    return c


class MRSObjective:
    """MRS loss of the synthesized waveform against a fixed target.

    F0, noise seed and target are fixed at construction; ``value_and_grad``
    varies envelope and periodicity only.
    """

    def __init__(self, f0, target, synth_cfg: SynthConfig, loss_cfg: LossConfig = LossConfig(),
                 fb80=None, fb12=None):
        self.synth_cfg = synth_cfg
        self.loss_cfg = loss_cfg
        self.plan = _plan_for(synth_cfg.frame, fb80, fb12)
        self.f0 = np.asarray(f0, dtype=np.float64)
        t = target.samples if isinstance(target, Waveform) else np.asarray(target, dtype=np.float64)
        n = self.f0.shape[0] * synth_cfg.frame.hop
        if t.shape != (n,):
            raise ValueError(f"target has {t.shape[0]} samples, features imply {n}")
        self.target = t
        self.exc = excitation(self.f0, synth_cfg, self.plan)
        self._target_logmag = [
            np.log(np.maximum(np.abs(_loss_stft(t, w, loss_cfg.loss_hop)), LOG_FLOOR))
            for w in loss_cfg.windows
        ]
        self._idx = [frame_index(n, w, loss_cfg.loss_hop) for w in loss_cfg.windows]
        plan = self.plan
        self._interp = np.zeros((plan.fb12.n_mels, plan.cfg.n_bins))
        cols = np.arange(plan.cfg.n_bins)
        np.add.at(self._interp, (plan.lo, cols), 1.0 - plan.frac)
        np.add.at(self._interp, (plan.hi, cols), plan.frac)

    def features(self, envelope_logmel, periodicity) -> AcousticFeatures:
        return AcousticFeatures(self.f0, periodicity, envelope_logmel, self.synth_cfg.frame)

    def _forward(self, envelope_logmel, periodicity):
        plan, exc = self.plan, self.exc
        n, g, hop = plan.cfg.fft_size, plan.gain, plan.cfg.hop
        mel = envelope_to_mel(envelope_logmel)
        v_pre = mel @ plan.pinv
        v = np.maximum(v_pre, 0.0)
        p_lo, p_hi = periodicity[:, plan.lo], periodicity[:, plan.hi]
        p_raw = p_lo + plan.frac * (p_hi - p_lo)
        p_bins = np.clip(p_raw, 0.0, 1.0)
        seg_p = np.fft.irfft(g * (p_bins * v) * exc.periodic_spec, n=n, axis=-1)
        seg_a = np.fft.irfft(g * ((1.0 - p_bins) * v) * exc.noise_spec, n=n, axis=-1)
        seg_a = seg_a * plan.noise_window
        # same summation order as vocoder.synthesize, so a self-target gives loss 0 exactly
        s_hat = overlap_add_centered(seg_p, hop) + overlap_add_centered(seg_a, hop)
        return mel, v_pre, v, p_raw, p_bins, s_hat

    def waveform(self, envelope_logmel, periodicity) -> Waveform:
        s_hat = self._forward(np.asarray(envelope_logmel, float), np.asarray(periodicity, float))[-1]
        return Waveform(s_hat, self.synth_cfg.frame.sample_rate)

    def value_and_grad(self, envelope_logmel, periodicity):
        """Returns ``(loss, per_resolution_terms, FeatureGradients)``."""
        L = np.asarray(envelope_logmel, dtype=np.float64)
        P = np.asarray(periodicity, dtype=np.float64)
        _check_features(self.features(L, P), self.plan)
        plan, exc, cfg = self.plan, self.exc, self.loss_cfg
        n, g, hop = plan.cfg.fft_size, plan.gain, plan.cfg.hop
        mel, v_pre, v, p_raw, p_bins, s_hat = self._forward(L, P)

        terms = []
        d_s = np.zeros_like(s_hat)
        for window, lam, f_ref, idx in zip(cfg.windows, cfg.weights, self._target_logmag, self._idx):
            spec = np.fft.rfft(s_hat[idx] * make_window("hann", window), axis=-1)
            mag = np.abs(spec)
            above = mag > LOG_FLOOR
            f_hat = np.log(np.where(above, mag, LOG_FLOOR))
            diff = f_hat - f_ref
            num = np.abs(diff).sum()
            den = np.abs(f_hat).sum()
            terms.append(lam * num / den)
            # sign(0) == 0 is the sub-gradient convention at the kinks
            d_f = lam * (np.sign(diff) / den - num * np.sign(f_hat) / den**2)
            with np.errstate(invalid="ignore", divide="ignore"):
                d_mag = np.where(above, d_f / mag, 0.0)
                d_spec = np.where(above, d_mag * spec / np.where(above, mag, 1.0), 0.0)
            d_frames = _irfft_adjoint(d_spec, window) * make_window("hann", window)
            d_s += np.bincount(idx.ravel(), weights=d_frames.ravel(), minlength=d_s.shape[0])

        n_frames = L.shape[0]
        d_full = np.concatenate([np.zeros(hop), d_s])
        d_seg = np.empty((n_frames, n))
        d_seg[:, :hop] = d_full[:n_frames * hop].reshape(n_frames, hop)
        d_seg[:, hop:] = d_full[hop:].reshape(n_frames, hop)

        c = _bin_multiplicity(plan.cfg.n_bins) * (g / n)
        d_hp = c * np.real(exc.periodic_spec * np.conj(np.fft.rfft(d_seg, axis=-1)))
        d_ha = c * np.real(exc.noise_spec * np.conj(np.fft.rfft(d_seg * plan.noise_window, axis=-1)))

        d_v = (d_hp * p_bins + d_ha * (1.0 - p_bins)) * (v_pre > 0)
        d_pbins = (d_hp - d_ha) * v * ((p_raw >= 0.0) & (p_raw <= 1.0))
        d_periodicity = d_pbins @ self._interp.T
        d_envelope = (d_v @ plan.pinv.T) * mel

        for name, arr in (("envelope", d_envelope), ("periodicity", d_periodicity)):
            bad = ~np.all(np.isfinite(arr), axis=1)
            if np.any(bad):
                raise FloatingPointError(
                    f"non-finite {name} gradient at frame {int(np.flatnonzero(bad)[0])}"
                )
        loss = float(np.sum(terms))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite MRS loss")
        return loss, np.array(terms), FeatureGradients(d_envelope, d_periodicity)


def mrs_grad(
    features: AcousticFeatures,
    target,
    noise_seed: int = 0,
    cfg: LossConfig = LossConfig(),
    synth_cfg: SynthConfig | None = None,
) -> tuple[float, FeatureGradients]:
    synth_cfg = synth_cfg or SynthConfig(frame=features.config, noise_seed=noise_seed)
    obj = MRSObjective(features.f0, target, synth_cfg, cfg)
    loss, _, grads = obj.value_and_grad(features.envelope_logmel, features.periodicity)
    return loss, grads


def finite_diff_check(f, x, analytic_grad, epsilon: float = 1e-4, num_probes: int = 40,
                      seed: int = 0, coords=None) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f``.

    Probes ``num_probes`` random coordinates of ``x`` (or the flat indices in
    ``coords``). Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.asarray(analytic_grad, dtype=np.float64).reshape(-1)
    if coords is None:
        rng = np.random.default_rng(seed)
        coords = rng.choice(x.size, size=min(num_probes, x.size), replace=False)
    worst = 0.0
    flat = x.reshape(-1)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + epsilon
        up = f(x)
        flat[i] = orig - epsilon
        down = f(x)
        flat[i] = orig
        numeric = (up - down) / (2.0 * epsilon)
        a = grad[i]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
    return worst


@dataclass
class FitResult:
    features: AcousticFeatures
    history: list  # rows of (step, total, *per-resolution terms)


def fit_features(
    target,
    init: AcousticFeatures,
    opt: OptimizerConfig = OptimizerConfig(),
    loss_cfg: LossConfig = LossConfig(),
    noise_seed: int = 0,
    synth_cfg: SynthConfig | None = None,
    callback=None,
) -> FitResult:
    """Analysis-by-synthesis: Adam-style descent on envelope and periodicity.

    F0 stays fixed. History row ``k`` is the loss of the parameters before
    update ``k``; the last row is the loss of the returned features.
    """
    if opt.steps == 0:
        return FitResult(init.copy(), [])
    lr_end = opt.step_size if opt.final_step_size is None else opt.final_step_size
    synth_cfg = synth_cfg or SynthConfig(frame=init.config, noise_seed=noise_seed)
    obj = MRSObjective(init.f0, target, synth_cfg, loss_cfg)
    params = [init.envelope_logmel.copy(), init.periodicity.copy()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    history = []

    for step in range(opt.steps + 1):
        loss, terms, grads = obj.value_and_grad(*params)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became non-finite at step {step}")
        history.append((step, loss, *terms.tolist()))
        if callback is not None:
            callback(step, loss)
        if step == opt.steps:
            break
        lr = opt.step_size + (lr_end - opt.step_size) * step / opt.steps
        for k, gk in enumerate((grads.d_envelope, grads.d_periodicity)):
            m[k] = opt.beta1 * m[k] + (1 - opt.beta1) * gk
            v[k] = opt.beta2 * v[k] + (1 - opt.beta2) * gk**2
            m_hat = m[k] / (1 - opt.beta1 ** (step + 1))
            v_hat = v[k] / (1 - opt.beta2 ** (step + 1))
            params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        if opt.clamp_periodicity:
            params[1] = np.clip(params[1], 0.0, 1.0)

    return FitResult(obj.features(*params), history)


def history_csv(history, windows=(512, 1024, 2048)) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "total", *[f"mrs_{n}" for n in windows]])
    for row in history:
        w.writerow([row[0], *(repr(float(x)) for x in row[1:])])
    return buf.getvalue()
