"""Zero-phase DDSP vocoder: analysis, synthesis, loss, gradients and metrics."""

from .analysis import AcousticFeatures, F0Config, analyze
from .grad import FeatureGradients, OptimizerConfig, fit_features, mrs_grad
from .loss import LossConfig, generator_loss, mrs_loss
from .metrics import mcd_dtw, measured_snr, mix_at_snr, spectrogram_ssim
from .signal import FrameConfig, Waveform, istft, stft
from .vocoder import StreamingSynthesizer, SynthConfig, synthesize

__version__ = "0.1.0"

__all__ = [
    "AcousticFeatures",
    "F0Config",
    "FeatureGradients",
    "FrameConfig",
    "LossConfig",
    "OptimizerConfig",
    "StreamingSynthesizer",
    "SynthConfig",
    "Waveform",
    "analyze",
    "fit_features",
    "generator_loss",
    "istft",
    "mcd_dtw",
    "measured_snr",
    "mix_at_snr",
    "mrs_grad",
    "mrs_loss",
    "spectrogram_ssim",
    "stft",
    "synthesize",
]
