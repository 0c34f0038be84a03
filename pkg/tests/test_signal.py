import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddspvoc.signal import (
    LOG_FLOOR,
    ConfigError,
    FrameConfig,
    Waveform,
    cola_residual,
    hz_to_mel,
    istft,
    make_mel_filterbank,
    make_window,
    mel_pinv,
    mel_project,
    mel_to_hz,
    mel_to_linear,
    overlap_add,
    stft,
)

from conftest import noise


def naive_stft(x, n_fft, hop):
    """Reference: np.pad reflect, explicit frame loop, DFT by matrix product."""
    padded = np.pad(x, n_fft // 2, mode="reflect")
    n = np.arange(n_fft)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * n / n_fft)
    k = np.arange(n_fft // 2 + 1)
    dft = np.exp(-2j * np.pi * np.outer(k, n) / n_fft)
    frames = [padded[t * hop:t * hop + n_fft] * w for t in range(len(x) // hop + 1)]
    return np.array([dft @ f for f in frames])


class TestFrameConfig:
    def test_defaults(self, cfg):
        assert (cfg.sample_rate, cfg.fft_size, cfg.hop, cfg.window_len) == (16000, 256, 128, 256)
        assert cfg.n_bins == 129
        assert cfg.hop_seconds == pytest.approx(0.008)

    @pytest.mark.parametrize("kwargs", [
        dict(sample_rate=0),
        dict(fft_size=250),
        dict(window_len=1),
        dict(window_len=512),
        dict(hop=0),
        dict(hop=300),
        dict(window_kind="hamming"),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            FrameConfig(**kwargs)

    def test_frame_count(self, cfg):
        assert cfg.n_frames(16000) == 126
        assert cfg.n_frames(127) == 1


class TestWindow:
    def test_periodic_hann_4(self):
        np.testing.assert_allclose(make_window("hann", 4), [0.0, 0.5, 1.0, 0.5], atol=1e-15)

    def test_length_one_is_degenerate(self):
        assert make_window("hann", 1).tolist() == [0.0]
        with pytest.raises(ConfigError):
            FrameConfig(window_len=1)

    def test_cola_residual_direct_sum(self):
        w = make_window("hann", 256)
        # oracle: tile the window at hop 128 over a long span and check the interior
        acc = np.zeros(256 * 10)
        for start in range(0, acc.size - 256 + 1, 128):
            acc[start:start + 256] += w
        interior = acc[256:-256]
        assert np.ptp(interior) < 1e-12
        assert cola_residual(w, 128) < 1e-12

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_window("kaiser", 8)


class TestStft:
    def test_matches_naive_oracle(self, rng, cfg):
        x = rng.standard_normal(1000)
        got = stft(Waveform(x), cfg).frames
        np.testing.assert_allclose(got, naive_stft(x, 256, 128), atol=1e-10)

    def test_impulse_frame0_flat(self, cfg):
        x = np.zeros(256)
        x[0] = 1.0
        mag = np.abs(stft(Waveform(x), cfg).frames[0])
        np.testing.assert_allclose(mag, 1.0, atol=1e-12)

    def test_sine_dominant_bin(self, cfg):
        t = np.arange(16000) / 16000
        spec = np.abs(stft(Waveform(np.sin(2 * np.pi * 1000 * t)), cfg).frames)
        assert np.all(np.argmax(spec[2:-2], axis=1) == 16)

    def test_frame_count_and_bins(self, rng, cfg):
        spec = stft(noise(rng), cfg)
        assert spec.frames.shape == (126, 129)

    def test_sample_rate_mismatch(self, cfg):
        with pytest.raises(ConfigError):
            stft(Waveform(np.zeros(100), 8000), cfg)

    def test_empty(self, cfg):
        with pytest.raises(ValueError):
            stft(Waveform(np.zeros(0)), cfg)

    def test_short_signal_reflects_repeatedly(self, cfg):
        # shorter than the half window: reflection must wrap more than once
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(stft(Waveform(x), cfg).frames, naive_stft(x, 256, 128), atol=1e-12)


class TestIstft:
    def test_round_trip_white_noise(self, rng, cfg):
        x = rng.standard_normal(16000)
        y = istft(stft(Waveform(x), cfg), length=x.size).samples
        assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-6

    def test_round_trip_speech_shaped(self, rng, cfg):
        # pink-ish noise with a syllabic envelope
        x = np.cumsum(rng.standard_normal(16000)) * 0.01
        x -= np.convolve(x, np.ones(64) / 64, mode="same")
        x *= 0.5 + 0.5 * np.sin(2 * np.pi * 4 * np.arange(16000) / 16000) ** 2
        y = istft(stft(Waveform(x), cfg), length=x.size).samples
        assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-6

    def test_zero_spectrogram(self, cfg):
        from ddspvoc.signal import ComplexSpectrogram

        y = istft(ComplexSpectrogram(np.zeros((10, 129), complex), cfg))
        assert np.all(y.samples == 0.0)

    def test_single_frame_is_windowed_ifft(self, rng, cfg):
        frame = np.fft.rfft(rng.standard_normal(256))
        w = make_window("hann", 256)
        # the overlap-add numerator of one frame is exactly window * iFFT
        np.testing.assert_array_equal(
            overlap_add((np.fft.irfft(frame, n=256) * w)[None, :], 128),
            np.fft.irfft(frame, n=256) * w,
        )

    def test_default_length(self, rng, cfg):
        spec = stft(noise(rng, 1280), cfg)
        assert len(istft(spec)) == 1280

    def test_length_too_long(self, rng, cfg):
        spec = stft(noise(rng, 1280), cfg)
        with pytest.raises(ValueError):
            istft(spec, length=10 * 1280)

    def test_bad_shape(self, cfg):
        from ddspvoc.signal import ComplexSpectrogram

        with pytest.raises(ValueError):
            istft(ComplexSpectrogram(np.zeros((4, 100), complex), cfg))


class TestMelScale:
    def test_htk_reference_points(self):
        assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2))
        assert hz_to_mel(1000.0) == pytest.approx(999.9855, abs=1e-3)

    @given(st.floats(0, 8000))
    def test_inverse(self, f):
        assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, abs=1e-7)


def triangle_area_oracle(cfg, n_mels):
    """Mean of each triangle over each bin's extent by fine Riemann sums."""
    edges = mel_to_hz(np.linspace(0, hz_to_mel(cfg.sample_rate / 2), n_mels + 2))
    df = cfg.sample_rate / cfg.fft_size
    sub = (np.arange(400) + 0.5) / 400 - 0.5
    out = np.zeros((n_mels, cfg.n_bins))
    for m in range(n_mels):
        lo, mid, hi = edges[m:m + 3]
        for k in range(cfg.n_bins):
            f = k * df + sub * df
            tri = np.where(f < mid, (f - lo) / (mid - lo), (hi - f) / (hi - mid))
            out[m, k] = np.clip(tri, 0, None).mean()
    return out


class TestFilterbank:
    def test_shapes(self, banks):
        fb80, fb12 = banks
        assert fb80.weights.shape == (80, 129)
        assert fb12.weights.shape == (12, 129)
        assert np.all(fb80.weights.sum(axis=1) > 0)
        assert np.all(fb12.weights.sum(axis=1) > 0)

    def test_matches_area_oracle(self, cfg):
        fb = make_mel_filterbank(cfg, 12)
        np.testing.assert_allclose(fb.weights, triangle_area_oracle(cfg, 12), atol=2e-5)

    def test_single_band_projection(self, rng, cfg):
        fb = make_mel_filterbank(cfg, 1, 0.0, 8000.0)
        assert fb.weights.shape == (1, 129)
        assert np.all(fb.weights > 0)
        mag = rng.random((3, 129))
        np.testing.assert_allclose(mel_project(mag, fb)[:, 0], mag @ fb.weights[0])

    def test_invalid_range(self, cfg):
        with pytest.raises(ValueError):
            make_mel_filterbank(cfg, 10, 5000.0, 4000.0)
        with pytest.raises(ValueError):
            make_mel_filterbank(cfg, 10, 0.0, 9000.0)
        with pytest.raises(ValueError):
            make_mel_filterbank(cfg, 0)


class TestMelProject:
    def test_zero(self, banks):
        assert np.all(mel_project(np.zeros((2, 129)), banks[0]) == 0.0)

    def test_single_bin_picks_weight_column(self, banks):
        fb80 = banks[0]
        frame = np.zeros(129)
        frame[37] = 1.0
        np.testing.assert_array_equal(mel_project(frame[None], fb80)[0], fb80.weights[:, 37])

    def test_triple_loop_oracle(self, rng, banks):
        fb80 = banks[0]
        mag = rng.random((4, 129))
        ref = np.zeros((4, 80))
        for t in range(4):
            for m in range(80):
                for k in range(129):
                    ref[t, m] += fb80.weights[m, k] * mag[t, k]
        np.testing.assert_allclose(mel_project(mag, fb80), ref, rtol=1e-12, atol=1e-15)

    def test_bin_mismatch(self, banks):
        with pytest.raises(ValueError):
            mel_project(np.zeros((1, 128)), banks[0])


def smooth_envelopes(rng, n):
    k = np.arange(6)
    fr = np.linspace(0, 1, 129)
    coef = rng.normal(0, 1, (n, 6)) / (1 + k)
    return np.exp(coef @ np.cos(np.pi * np.outer(k, fr)) - 2 * fr)


class TestMelToLinear:
    def test_zero(self, banks):
        assert np.all(mel_to_linear(np.zeros((3, 80)), banks[0]) == 0.0)

    def test_round_trip_smooth(self, rng, banks):
        fb80 = banks[0]
        m = mel_project(smooth_envelopes(rng, 50), fb80)
        back = mel_project(mel_to_linear(m, fb80), fb80)
        assert np.linalg.norm(back - m) / np.linalg.norm(m) < 0.05

    def test_nonnegative(self, rng, banks):
        out = mel_to_linear(rng.random((10, 80)), banks[0])
        assert np.all(out >= 0)

    @pytest.mark.parametrize("band", [10, 30, 50, 70])
    def test_single_band_concentrated_on_support(self, banks, band):
        # the regularized pseudo-inverse is not band-local; its mass stays mostly
        # on the band's own bins and peaks there (see decisions ledger)
        fb80 = banks[0]
        mel = np.zeros(80)
        mel[band] = 1.0
        lin = mel_to_linear(mel[None], fb80)[0]
        support = fb80.weights[band] > 0
        assert support[np.argmax(lin)]
        assert lin[support].sum() / lin.sum() >= 0.75

    def test_pinv_drops_null_direction(self, banks):
        fb80 = banks[0]
        s = np.linalg.svd(fb80.weights, compute_uv=False)
        pinv = mel_pinv(fb80)
        # numerical rank matches the singular values above the cutoff
        assert np.linalg.matrix_rank(pinv, tol=1e-10) == int(np.sum(s > 1e-4 * s[0]))
        assert np.all(np.isfinite(pinv))

    def test_rejects_negative(self, banks):
        with pytest.raises(ValueError):
            mel_to_linear(-np.ones((1, 80)), banks[0])

    def test_rejects_band_mismatch(self, banks):
        with pytest.raises(ValueError):
            mel_to_linear(np.ones((1, 79)), banks[0])


signals = arrays(np.float64, st.integers(200, 3000),
                 elements=st.floats(-1, 1, allow_nan=False, allow_infinity=False))


class TestProperties:
    @given(signals)
    def test_parseval_round_trip(self, x):
        y = istft(stft(Waveform(x)), length=x.size).samples
        ex = np.sum(x**2)
        assert abs(np.sum(y**2) - ex) <= 1e-10 * max(ex, 1e-300) + 1e-300

    @given(signals, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
    def test_stft_linear(self, x, a, b, seed):
        y = np.random.default_rng(seed).standard_normal(x.size)
        lhs = stft(Waveform(a * x + b * y)).frames
        rhs = a * stft(Waveform(x)).frames + b * stft(Waveform(y)).frames
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    @given(arrays(np.float64, 129, elements=st.floats(0, 10)), st.integers(0, 128),
           st.floats(0, 5))
    def test_mel_project_monotone(self, mag, k, delta):
        fb80 = make_mel_filterbank(FrameConfig(), 80)
        bumped = mag.copy()
        bumped[k] += delta
        assert np.all(mel_project(bumped[None], fb80) >= mel_project(mag[None], fb80))

    def test_shape_contract(self):
        cfg = FrameConfig()
        assert cfg.n_bins == 129 and cfg.hop_seconds * 1000 == pytest.approx(8.0)

    def test_log_floor_value(self):
        assert LOG_FLOOR == 1e-5
