import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddspvoc.analysis import extract_envelope
from ddspvoc.metrics import (
    MCD_CONST,
    SNR_INF,
    dtw,
    mcc,
    mcd_dtw,
    measured_snr,
    mix_at_snr,
    pairwise_distances,
    spectrogram_ssim,
    ssim_image,
)
from ddspvoc.signal import Waveform
from ddspvoc.synthetic import corpus, sawtooth

skimage_metrics = pytest.importorskip("skimage.metrics")


def naive_dtw_cost(dist):
    """Plain quadratic DP with explicit loops; returns the accumulated path cost."""
    n, m = dist.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = dist[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return acc[n, m]


def noise_wave(seed, n=8000, scale=0.1):
    return Waveform(scale * np.random.default_rng(seed).standard_normal(n))


class TestMcc:
    def test_constant(self):
        assert MCD_CONST == pytest.approx(6.14185, abs=1e-5)

    def test_silence_zero(self):
        assert np.all(mcc(Waveform(np.zeros(4000))).frames == 0)

    def test_amplitude_invariant(self):
        w = noise_wave(0)
        a = mcc(w).frames
        b = mcc(Waveform(3.0 * w.samples)).frames
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_naive_dct(self, cfg):
        w = sawtooth(170.0, 0.25)
        logmel = extract_envelope(w, cfg)
        n = logmel.shape[1]
        k = np.arange(1, 14)
        basis = np.sqrt(2.0 / n) * np.cos(np.pi * np.outer(k, 2 * np.arange(n) + 1) / (2 * n))
        ref = logmel @ basis.T
        np.testing.assert_allclose(mcc(w, cfg).frames, ref, atol=1e-10)

    def test_n_coeffs_range(self):
        with pytest.raises(ValueError):
            mcc(noise_wave(0), n_coeffs=80)
        assert mcc(noise_wave(0), n_coeffs=5).n_coeffs == 5


class TestDtw:
    def test_matches_naive_dp(self, rng):
        dist = rng.random((23, 31))
        path = dtw(dist)
        total = dist[path.pairs[:, 0], path.pairs[:, 1]].sum()
        assert total == pytest.approx(naive_dtw_cost(dist), rel=1e-12)
        assert path.cost == pytest.approx(total / len(path))

    def test_path_is_valid(self, rng):
        path = dtw(rng.random((9, 14))).pairs
        assert tuple(path[0]) == (0, 0) and tuple(path[-1]) == (8, 13)
        steps = np.diff(path, axis=0)
        assert set(map(tuple, steps)) <= {(1, 0), (0, 1), (1, 1)}

    def test_identity_is_diagonal(self, rng):
        a = rng.random((12, 5))
        path = dtw(pairwise_distances(a, a))
        assert path.cost == 0.0
        assert np.array_equal(path.pairs[:, 0], path.pairs[:, 1])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            dtw(np.zeros((0, 3)))


class TestMcd:
    def test_self_zero(self):
        w = noise_wave(1)
        assert mcd_dtw(w, w) == 0.0

    @pytest.mark.parametrize("item", range(5))
    def test_shift_three_hops(self, item):
        # an utterance surrounded by silence, delayed by 3 hops; DTW absorbs the shift
        name, w = corpus(0)[item]
        x = np.concatenate([np.zeros(4000), w.samples[:8000], np.zeros(4000)])
        delayed = np.concatenate([np.zeros(3 * 128), x[:-3 * 128]])
        a, b = mcc(Waveform(x)).frames, mcc(Waveform(delayed)).frames
        trimmed = MCD_CONST * dtw(pairwise_distances(a[2:-2], b[2:-2])).cost
        assert trimmed <= 0.1

    def test_positive_for_different(self):
        assert mcd_dtw(noise_wave(1), Waveform(sawtooth(150.0, 0.5).samples)) > 1.0


class TestSsim:
    def test_matches_skimage(self, rng):
        x = rng.random((30, 60))
        y = np.clip(x + 0.3 * rng.standard_normal(x.shape), 0, 1)
        ref = skimage_metrics.structural_similarity(
            x, y, win_size=7, data_range=1.0, gaussian_weights=False, use_sample_covariance=True
        )
        assert ssim_image(x, y) == pytest.approx(ref, abs=1e-12)

    def test_identity_exact(self):
        w = noise_wave(2)
        assert spectrogram_ssim(w, w) == 1.0

    def test_sign_flip(self):
        w = noise_wave(3)
        assert spectrogram_ssim(w, Waveform(-w.samples)) == 1.0

    def test_silence_pair(self):
        z = Waveform(np.zeros(4000))
        assert spectrogram_ssim(z, z) == 1.0

    def test_independent_noise_below_self(self):
        for _, w in corpus(0):
            other = Waveform(np.random.default_rng(9).standard_normal(len(w)) * np.std(w.samples))
            assert spectrogram_ssim(other, w) < spectrogram_ssim(w, w)

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim_image(np.zeros((5, 10)), np.zeros((5, 10)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spectrogram_ssim(noise_wave(0, 4000), noise_wave(0, 4001))


class TestMix:
    def test_zero_db(self, rng):
        c, n = noise_wave(4), noise_wave(5)
        mix = mix_at_snr(c, n, 0.0)
        scaled = mix.samples - c.samples
        assert np.sum(scaled**2) == pytest.approx(np.sum(c.samples**2), rel=1e-10)

    def test_gate(self):
        c, n = noise_wave(4), noise_wave(5)
        np.testing.assert_allclose(mix_at_snr(c, n, 120.0).samples, c.samples, atol=1e-5)
        np.testing.assert_allclose(mix_at_snr(c, n, np.inf).samples, c.samples, atol=1e-5)

    def test_round_trip_minus5(self):
        c, n = noise_wave(6), noise_wave(7)
        assert measured_snr(mix_at_snr(c, n, -5.0), c) == pytest.approx(-5.0, abs=0.01)

    def test_measured_sentinel(self):
        c = noise_wave(8)
        assert measured_snr(c, c) == SNR_INF

    def test_measured_zero_db(self):
        c, n = noise_wave(8), noise_wave(9).samples
        n = n * np.sqrt(np.sum(c.samples**2) / np.sum(n**2))
        assert measured_snr(Waveform(c.samples + n), c) == pytest.approx(0.0, abs=1e-10)

    def test_noise_truncated(self):
        c, n = noise_wave(1, 1000), noise_wave(2, 3000)
        assert len(mix_at_snr(c, n, 5.0)) == 1000

    @pytest.mark.parametrize("make", [
        lambda: (noise_wave(1, 1000), noise_wave(2, 999), 0.0),
        lambda: (noise_wave(1), Waveform(np.zeros(8000)), 0.0),
        lambda: (Waveform(np.zeros(8000)), noise_wave(2), 0.0),
        lambda: (noise_wave(1), noise_wave(2), float("nan")),
        lambda: (noise_wave(1), Waveform(np.ones(8000), 8000), 0.0),
    ])
    def test_rejects(self, make):
        with pytest.raises(ValueError):
            mix_at_snr(*make())


class TestProperties:
    @given(st.integers(0, 2**31), st.integers(0, 2**31))
    def test_mcd_symmetric_nonnegative(self, s1, s2):
        a, b = noise_wave(s1, 3000), Waveform(sawtooth(80 + s2 % 300, 3000 / 16000).samples)
        ab, ba = mcd_dtw(a, b), mcd_dtw(b, a)
        assert ab == pytest.approx(ba, rel=1e-12)
        assert ab >= 0

    @given(st.integers(0, 2**31), st.floats(1e-2, 1e2))
    def test_ssim_bounded_and_scale_invariant(self, seed, c):
        a, b = noise_wave(seed, 3000), noise_wave(seed + 1, 3000)
        s = spectrogram_ssim(a, b)
        assert -1.0 <= s <= 1.0
        scaled = spectrogram_ssim(Waveform(c * a.samples), Waveform(c * b.samples))
        assert scaled == pytest.approx(s, abs=1e-9)

    @given(st.integers(0, 2**31), st.floats(-5.0, 10.0))
    def test_mix_residual_proportional_to_noise(self, seed, snr):
        c, n = noise_wave(seed, 2000), noise_wave(seed + 1, 2000)
        resid = mix_at_snr(c, n, snr).samples - c.samples
        gain = resid @ n.samples / (n.samples @ n.samples)
        assert gain > 0
        np.testing.assert_allclose(resid, gain * n.samples, atol=1e-12 * np.max(np.abs(resid)))

    @given(st.integers(0, 2**31), st.floats(-5.0, 10.0))
    def test_mix_accuracy(self, seed, snr):
        c, n = noise_wave(seed, 4000), noise_wave(seed + 1, 4000)
        assert abs(measured_snr(mix_at_snr(c, n, snr), c) - snr) < 0.01
