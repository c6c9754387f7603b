import numpy as np
import pytest
from scipy.signal import find_peaks, welch

from fpcg.audio_io import moving_rms
from fpcg.dataset import Gender
from fpcg.errors import InvalidSpecError
from fpcg.synth import (
    ArtifactKind,
    BeatSpec,
    ClassDeltaSpec,
    add_noise_at_snr,
    gen_artifact,
    gen_beats,
    gen_dataset,
    write_corpus,
)


class TestGenBeats:
    def test_beat_count_matches_rate(self):
        rate = 4000
        w = gen_beats(BeatSpec(fhr_bpm=120.0, jitter=0.0, s2_relative_amp=0.4),
                      10.0, rate, seed=0)
        env = moving_rms(w.samples, int(0.03 * rate))
        peaks, _ = find_peaks(env, distance=int(0.3 * rate), height=0.6 * env.max())
        assert abs(peaks.size - 20) <= 1

    def test_zero_amplitude_is_silent(self):
        w = gen_beats(BeatSpec(amplitude=0.0), 2.0, 4000, seed=0)
        assert np.all(w.samples == 0)

    def test_seeded_determinism(self):
        a = gen_beats(BeatSpec(), 3.0, 4000, seed=42)
        b = gen_beats(BeatSpec(), 3.0, 4000, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_normalized_amplitude(self):
        w = gen_beats(BeatSpec(amplitude=0.8), 5.0, 4000, seed=1)
        assert np.max(np.abs(w.samples)) == pytest.approx(0.8, rel=1e-9)

    def test_invalid_spec(self):
        with pytest.raises(InvalidSpecError):
            gen_beats(BeatSpec(fhr_bpm=30.0), 2.0, 4000, seed=0)
        with pytest.raises(InvalidSpecError):
            gen_beats(BeatSpec(s1_freq_hz=3000.0), 2.0, 4000, seed=0)


class TestGenArtifact:
    def test_hum_peak_at_50hz(self):
        w = gen_artifact(ArtifactKind.HUM, 2.0, 4000, seed=0)
        spec = np.abs(np.fft.rfft(w.samples))
        freqs = np.fft.rfftfreq(len(w), 1 / 4000)
        assert abs(freqs[np.argmax(spec)] - 50.0) < 1.0

    def test_hiss_spectral_flatness(self):
        w = gen_artifact(ArtifactKind.HISS, 4.0, 8000, seed=0)
        _, psd = welch(w.samples, fs=8000, nperseg=256)
        psd = psd[1:-1]
        flatness = np.exp(np.mean(np.log(psd))) / np.mean(psd)
        assert flatness > 0.8

    def test_friction_band_limited(self):
        w = gen_artifact(ArtifactKind.FRICTION, 2.0, 4000, seed=0)
        spec = np.abs(np.fft.rfft(w.samples)) ** 2
        freqs = np.fft.rfftfreq(len(w), 1 / 4000)
        in_band = spec[freqs <= 40.0].sum()
        assert in_band / spec.sum() > 0.999

    def test_duration_exact(self):
        for kind in ArtifactKind:
            w = gen_artifact(kind, 1.7, 4000, seed=3)
            assert len(w) == int(1.7 * 4000)

    def test_determinism(self):
        a = gen_artifact(ArtifactKind.THUMP, 2.0, 4000, seed=9)
        b = gen_artifact(ArtifactKind.THUMP, 2.0, 4000, seed=9)
        assert np.array_equal(a.samples, b.samples)


class TestAddNoise:
    def test_exact_snr(self):
        clean = gen_beats(BeatSpec(), 3.0, 4000, seed=0)
        noise = gen_artifact(ArtifactKind.HISS, 3.0, 4000, seed=1)
        noisy = add_noise_at_snr(clean, noise, 6.0)
        p_signal = np.mean(clean.samples**2)
        p_noise = np.mean((noisy.samples - clean.samples) ** 2)
        assert 10 * np.log10(p_signal / p_noise) == pytest.approx(6.0, abs=1e-9)


class TestGenDataset:
    def test_counts_and_balance(self):
        data = gen_dataset(10, 5, ClassDeltaSpec(sample_rate=2000, segment_s=2.0), seed=0)
        assert len(data) == 100
        labels = data.labels()
        assert (labels == 0).sum() == 50
        assert (labels == 1).sum() == 50

    def test_subject_ids_unique_per_subject(self):
        data = gen_dataset(4, 3, ClassDeltaSpec(sample_rate=2000, segment_s=2.0), seed=0)
        assert len(data.subjects()) == 8
        genders = data.subject_gender()
        assert sum(g is Gender.MALE for g in genders.values()) == 4

    def test_class_rates_differ_by_delta(self):
        delta = ClassDeltaSpec(fhr_delta_bpm=30.0, subject_fhr_sd_bpm=0.0,
                               noise_snr_db=None, sample_rate=4000, segment_s=8.0)
        data = gen_dataset(3, 2, delta, seed=0)

        def measured_bpm(w):
            env = moving_rms(w.samples, int(0.03 * w.sample_rate_hz))
            peaks, _ = find_peaks(env, distance=int(0.25 * w.sample_rate_hz),
                                  height=0.5 * env.max())
            return 60.0 * (peaks.size - 1) / ((peaks[-1] - peaks[0]) / w.sample_rate_hz)

        male = [measured_bpm(it.payload.waveform) for it in data if it.gender is Gender.MALE]
        female = [measured_bpm(it.payload.waveform) for it in data if it.gender is Gender.FEMALE]
        assert np.mean(female) - np.mean(male) == pytest.approx(30.0, abs=6.0)

    def test_determinism(self):
        a = gen_dataset(2, 2, ClassDeltaSpec(sample_rate=2000, segment_s=2.0), seed=7)
        b = gen_dataset(2, 2, ClassDeltaSpec(sample_rate=2000, segment_s=2.0), seed=7)
        for ia, ib in zip(a, b):
            assert np.array_equal(ia.payload.waveform.samples,
                                  ib.payload.waveform.samples)

    def test_samples_bounded(self):
        delta = ClassDeltaSpec(sample_rate=2000, segment_s=2.0,
                               gain_range=(0.5, 2.0), noise_snr_db=6.0)
        data = gen_dataset(4, 3, delta, seed=1)
        for item in data:
            samples = item.payload.waveform.samples
            assert np.all(np.isfinite(samples))
            assert np.max(np.abs(samples)) <= 1.0


class TestWriteCorpus:
    def test_corpus_reingests_via_manifest(self, tmp_path):
        from fpcg.dataset import load_manifest

        data = gen_dataset(2, 2, ClassDeltaSpec(sample_rate=2000, segment_s=2.0), seed=0)
        manifest = write_corpus(data, tmp_path / "corpus")
        ds = load_manifest(manifest)
        assert len(ds) == 4
        assert set(it.subject_id for it in ds) == set(data.subjects())
