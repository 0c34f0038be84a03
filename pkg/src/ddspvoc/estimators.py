"""scikit-learn style wrappers around analysis, synthesis and fitting.

Feature matrices use the ``AcousticFeatures.to_array`` layout: one row per
frame, columns ``[f0 | periodicity (12) | envelope log-mel (80)]``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import FEATURE_DIM, AcousticFeatures, F0Config, analyze
from .grad import OptimizerConfig, fit_features
from .loss import LossConfig
from .signal import FrameConfig, Waveform
from .vocoder import StreamingSynthesizer, SynthConfig, synthesize


def _frame_config(sample_rate, hop) -> FrameConfig:
    return FrameConfig(sample_rate=sample_rate, hop=hop, fft_size=2 * hop, window_len=2 * hop)


def _as_waveform(X, sample_rate) -> Waveform:
    x = check_array(X, ensure_2d=False, dtype=np.float64)
    if x.ndim == 2 and 1 in x.shape:
        x = x.ravel()
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D waveform, got shape {x.shape}")
    return Waveform(x, sample_rate)


def _as_features(X, cfg: FrameConfig) -> AcousticFeatures:
    arr = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if arr.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected {FEATURE_DIM} feature columns, got {arr.shape[1]}")
    return AcousticFeatures.from_array(arr, cfg)


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Waveform samples -> (T, 93) feature matrix. Stateless; ``fit`` only validates."""

    def __init__(self, sample_rate=16000, hop=128, f0_min=50.0, f0_max=500.0,
                 voicing_threshold=0.5):
        self.sample_rate = sample_rate
        self.hop = hop
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.voicing_threshold = voicing_threshold

    def _configs(self):
        cfg = _frame_config(self.sample_rate, self.hop)
        f0cfg = F0Config(self.f0_min, self.f0_max, self.voicing_threshold)
        f0cfg.validate(cfg.sample_rate)
        return cfg, f0cfg

    def fit(self, X=None, y=None):
        self.config_, self.f0_config_ = self._configs()
        self.n_features_out_ = FEATURE_DIM
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        wave = _as_waveform(X, self.sample_rate)
        return analyze(wave, self.config_, self.f0_config_).to_array()


class Vocoder(TransformerMixin, BaseEstimator):
    """(T, 93) feature matrix -> waveform samples of length ``T * hop``."""

    def __init__(self, sample_rate=16000, hop=128, noise_seed=0, streaming=False):
        self.sample_rate = sample_rate
        self.hop = hop
        self.noise_seed = noise_seed
        self.streaming = streaming

    def fit(self, X=None, y=None):
        self.config_ = SynthConfig(frame=_frame_config(self.sample_rate, self.hop),
                                   noise_seed=self.noise_seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        feats = _as_features(X, self.config_.frame)
        if not self.streaming:
            return synthesize(feats, self.config_).samples
        synth = StreamingSynthesizer(self.config_)
        out = synth.process(feats, flush=True).samples
        return out[synth.latency_samples:]


class FeatureFitter(BaseEstimator):
    """Analysis-by-synthesis: fit envelope and periodicity to a target waveform.

    ``fit(X, init=...)`` takes the target samples and an initial (T, 93)
    feature matrix; F0 is held at the initial values. ``predict`` returns the
    fitted feature matrix, ``transform`` its synthesis.
    """

    def __init__(self, step_size=1e-2, steps=500, final_step_size=None, noise_seed=0, sample_rate=16000, hop=128,
                 loss_windows=(512, 1024, 2048), loss_weights=(25.7, 51.3, 102.5)):
        self.step_size = step_size
        self.steps = steps
        self.final_step_size = final_step_size
        self.noise_seed = noise_seed
        self.sample_rate = sample_rate
        self.hop = hop
        self.loss_windows = loss_windows
        self.loss_weights = loss_weights

    def fit(self, X, y=None, init=None):
        if init is None:
            raise ValueError("FeatureFitter.fit needs init= (an initial feature matrix)")
        cfg = _frame_config(self.sample_rate, self.hop)
        target = _as_waveform(X, self.sample_rate)
        init_feats = _as_features(init, cfg)
        if len(target) != init_feats.n_frames * cfg.hop:
            raise ValueError(
                f"target has {len(target)} samples, init implies {init_feats.n_frames * cfg.hop}"
            )
        result = fit_features(
            target,
            init_feats,
            OptimizerConfig(step_size=self.step_size, steps=self.steps,
                            final_step_size=self.final_step_size),
            LossConfig(windows=tuple(self.loss_windows), weights=tuple(self.loss_weights)),
            noise_seed=self.noise_seed,
        )
        self.features_ = result.features
        self.loss_history_ = np.array(result.history) if result.history else np.empty((0, 2))
        self.synth_config_ = SynthConfig(frame=cfg, noise_seed=self.noise_seed)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "features_")
        return self.features_.to_array()

    def transform(self, X=None):
        check_is_fitted(self, "features_")
        return synthesize(self.features_, self.synth_config_).samples
