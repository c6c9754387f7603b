import numpy as np
import pytest

from fpcg.audio_io import Waveform
from fpcg.errors import InvalidConfigError, InvalidWindowError
from fpcg.spectral import (
    ChromaConfig,
    CqtConfig,
    MelConfig,
    MfccConfig,
    chroma,
    cqt,
    cqt_frequencies,
    fft,
    inverse_fft,
    istft,
    mel_filterbank,
    mel_spectrogram,
    mfcc,
    stft,
)

from conftest import sine


def naive_dft(x: np.ndarray) -> np.ndarray:
    n = x.size
    grid = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    return grid @ x


class TestFft:
    def test_impulse_all_ones(self):
        assert fft(np.array([1.0, 0, 0, 0])) == pytest.approx(np.ones(4))

    def test_constant_dc_only(self):
        spec = fft(np.full(8, 2.0))
        assert spec[0] == pytest.approx(16.0)
        assert np.abs(spec[1:]).max() < 1e-12

    def test_matches_naive_dft(self, rng):
        x = rng.standard_normal(1024)
        ref = naive_dft(x)
        got = fft(x)
        assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-9

    def test_zero_pads_to_power_of_two(self, rng):
        x = rng.standard_normal(300)
        assert fft(x).size == 512

    def test_roundtrip(self, rng):
        x = rng.standard_normal(777)
        assert inverse_fft(fft(x), n=777) == pytest.approx(x, abs=1e-9)

    def test_parseval(self, rng):
        for n in (2, 8, 64, 512, 2048):
            x = rng.standard_normal(n)
            spec = fft(x)
            assert np.sum(x**2) == pytest.approx(np.sum(np.abs(spec) ** 2) / spec.size,
                                                 rel=1e-9)


class TestStftIstft:
    def test_tone_peak_bin(self):
        w = sine(300.0, 1.0, 16000)
        grid = stft(w, 1024, 256, pad=False)
        expected_bin = round(300 * 1024 / 16000)
        assert np.all(np.argmax(np.abs(grid.bins), axis=1) == expected_bin)

    def test_zero_signal_zero_grid(self):
        grid = stft(Waveform(np.zeros(4096), 16000), 1024, 256)
        assert np.all(grid.bins == 0)
        assert np.all(istft(grid).samples == 0)

    def test_roundtrip_everywhere(self, rng):
        w = Waveform(rng.standard_normal(5000), 16000)
        rec = istft(stft(w, 1024, 256))
        assert np.abs(rec.samples - w.samples).max() < 1e-6

    def test_roundtrip_various_hops(self, rng):
        w = Waveform(rng.standard_normal(3000), 8000)
        for hop in (64, 128, 256, 512):
            rec = istft(stft(w, 1024, hop))
            assert np.abs(rec.samples - w.samples).max() < 1e-6

    def test_linearity(self, rng):
        w = Waveform(rng.standard_normal(2048), 8000)
        grid = stft(w, 512, 128)
        doubled = istft(grid.with_bins(2.0 * grid.bins))
        assert doubled.samples == pytest.approx(2.0 * w.samples, abs=1e-6)

    def test_invalid_window(self, tone16k):
        with pytest.raises(InvalidWindowError):
            stft(tone16k, 1000, 256)
        with pytest.raises(InvalidWindowError):
            stft(tone16k, 1024, 2048)

    def test_grid_shape_invariant(self, tone16k):
        grid = stft(tone16k, 1024, 256)
        assert grid.bins.shape[1] == 513


class TestMel:
    def test_zero_signal_zero_matrix(self):
        cfg = MelConfig(log_compress=False)
        m = mel_spectrogram(Waveform(np.zeros(8000), 16000), cfg)
        assert np.all(m == 0)

    def test_tone_at_band_center_is_argmax(self):
        cfg = MelConfig(n_mels=24, f_max_hz=2000.0, log_compress=False)
        bank = mel_filterbank(cfg, 16000)
        band = 9
        center_bin = int(np.argmax(bank[band]))
        freq = center_bin * 16000 / cfg.window_len
        m = mel_spectrogram(sine(freq, 1.0, 16000), cfg)
        assert np.all(np.argmax(m, axis=1) == band)

    def test_power_scales_quadratically(self, rng):
        cfg = MelConfig(log_compress=False)
        x = rng.standard_normal(8000) * 0.1
        m1 = mel_spectrogram(Waveform(x, 16000), cfg)
        m2 = mel_spectrogram(Waveform(2.0 * x, 16000), cfg)
        assert m2 == pytest.approx(4.0 * m1, rel=1e-9)

    def test_invalid_config(self, tone16k):
        with pytest.raises(InvalidConfigError):
            mel_spectrogram(tone16k, MelConfig(n_mels=0))
        with pytest.raises(InvalidConfigError):
            mel_spectrogram(tone16k, MelConfig(f_max_hz=9000.0))


class TestMfcc:
    def test_flat_spectrum_concentrates_in_c0(self, rng):
        # white noise has roughly flat log-mel rows; c0 dominates
        x = rng.standard_normal(16000)
        m = mfcc(Waveform(x, 16000), MfccConfig())
        assert np.all(np.abs(m[:, 0]) > np.abs(m[:, 1:]).max(axis=1))

    def test_matches_naive_dct(self, rng):
        from fpcg.spectral import mel_spectrogram as mel_fn

        cfg = MfccConfig(n_coeffs=13)
        w = Waveform(rng.standard_normal(8000), 16000)
        got = mfcc(w, cfg)
        energies = mel_fn(w, cfg.mel)
        logm = np.log(np.maximum(energies, cfg.log_floor))
        n = logm.shape[1]
        k = np.arange(n)
        naive = np.zeros_like(logm)
        for ci in range(n):
            basis = np.cos(np.pi * ci * (2 * k + 1) / (2 * n))
            scale = np.sqrt(1.0 / n) if ci == 0 else np.sqrt(2.0 / n)
            naive[:, ci] = scale * (logm * basis).sum(axis=1)
        assert got == pytest.approx(naive[:, :13], abs=1e-9)

    def test_amplitude_scaling_shifts_only_c0(self, rng):
        x = rng.standard_normal(16000) * 0.05
        alpha = 3.0
        cfg = MfccConfig()
        base = mfcc(Waveform(x, 16000), cfg)
        scaled = mfcc(Waveform(alpha * x, 16000), cfg)
        # orthonormal DCT: c0 = sum / sqrt(M), so the shift is 2 ln(alpha) sqrt(M)
        expected_shift = 2.0 * np.log(alpha) * np.sqrt(cfg.mel.n_mels)
        assert scaled[:, 0] - base[:, 0] == pytest.approx(
            np.full(base.shape[0], expected_shift), rel=1e-6)
        assert scaled[:, 1:] == pytest.approx(base[:, 1:], abs=1e-9)

    def test_invalid_config(self, tone16k):
        with pytest.raises(InvalidConfigError):
            mfcc(tone16k, MfccConfig(n_coeffs=100))


class TestChroma:
    def test_a440_argmax_class(self):
        m = chroma(sine(440.0, 1.0, 16000), ChromaConfig())
        assert np.all(np.argmax(m, axis=1) == 9)

    def test_zero_signal_zero_matrix(self):
        m = chroma(Waveform(np.zeros(8000), 16000), ChromaConfig())
        assert np.all(m == 0)

    def test_octave_folding(self):
        low = chroma(sine(440.0, 1.0, 16000), ChromaConfig())
        high = chroma(sine(880.0, 1.0, 16000), ChromaConfig())
        assert np.all(np.argmax(low, axis=1) == np.argmax(high, axis=1))

    def test_rows_l2_normalized(self):
        m = chroma(sine(440.0, 1.0, 16000), ChromaConfig(normalize=True))
        norms = np.linalg.norm(m, axis=1)
        assert norms == pytest.approx(np.ones_like(norms), rel=1e-9)


class TestCqt:
    def test_geometric_bin_placement(self):
        cfg = CqtConfig(f_min_hz=100.0, f_max_hz=2000.0, bins_per_octave=12, hop=512)
        freq = 100.0 * 2.0 ** (3 / 12)
        m = cqt(sine(freq, 1.0, 16000), cfg)
        assert np.all(np.argmax(m, axis=1) == 3)

    def test_zero_signal(self):
        cfg = CqtConfig(f_max_hz=1500.0)
        m = cqt(Waveform(np.zeros(8000), 8000), cfg)
        assert np.all(m == 0)

    def test_adjacent_center_ratio_constant(self):
        cfg = CqtConfig(bins_per_octave=12, f_max_hz=2000.0)
        freqs = cqt_frequencies(cfg)
        ratios = freqs[1:] / freqs[:-1]
        assert ratios == pytest.approx(np.full(ratios.size, 2.0 ** (1 / 12)), rel=1e-12)

    def test_invalid_config(self, tone16k):
        with pytest.raises(InvalidConfigError):
            cqt(tone16k, CqtConfig(f_max_hz=9000.0))
        with pytest.raises(InvalidConfigError):
            cqt(tone16k, CqtConfig(f_min_hz=-1.0))


class TestFiniteness:
    def test_all_transforms_finite(self, rng):
        w = Waveform(np.clip(rng.standard_normal(8000), -3, 3), 16000)
        assert np.all(np.isfinite(np.abs(stft(w, 512, 128).bins)))
        assert np.all(np.isfinite(mel_spectrogram(w, MelConfig())))
        assert np.all(np.isfinite(mfcc(w, MfccConfig())))
        assert np.all(np.isfinite(chroma(w, ChromaConfig())))
        assert np.all(np.isfinite(cqt(w, CqtConfig())))
