"""Synthetic heart-sound and artifact generators for desk-scale verification.

A heartbeat is modeled as a pair of Gaussian-windowed tone bursts (the two
normal heart sounds) repeating at the configured rate with seeded jitter.
Artifact generators cover the noise families the denoisers are asked to
handle: broadband hiss, low-frequency friction rumble, sparse thumps, and
mains hum. ``gen_dataset`` builds labeled two-class corpora with per-subject
nuisance variation so grouped evaluation is meaningfully harder than
segment-level splits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import Waveform
from .dataset import Gender, LabeledDataset, Segment, SubjectRecord, save_manifest
from .errors import InvalidSpecError


@dataclass(frozen=True)
class BeatSpec:
    """Parameters of the synthetic heartbeat train."""

    fhr_bpm: float = 140.0
    s1_freq_hz: float = 90.0
    s2_freq_hz: float = 150.0
    s1_s2_gap_s: float = 0.18
    amplitude: float = 0.8
    jitter: float = 0.02          # relative std of the inter-beat interval
    s2_relative_amp: float = 0.5
    burst_width_s: float = 0.025  # Gaussian std of each burst envelope

    def validate(self, sample_rate_hz: int) -> None:
        nyquist = sample_rate_hz / 2.0
        if not (60.0 <= self.fhr_bpm <= 240.0):
            raise InvalidSpecError(f"fhr_bpm {self.fhr_bpm} outside [60, 240]")
        if not (0.0 < self.s1_freq_hz < nyquist and 0.0 < self.s2_freq_hz < nyquist):
            raise InvalidSpecError("burst frequencies must lie below Nyquist")
        if self.jitter < 0:
            raise InvalidSpecError("jitter must be >= 0")
        if self.amplitude < 0:
            raise InvalidSpecError("amplitude must be >= 0")


def _burst(t: np.ndarray, center_s: float, freq_hz: float, width_s: float) -> np.ndarray:
    envelope = np.exp(-0.5 * ((t - center_s) / width_s) ** 2)
    return envelope * np.sin(2.0 * np.pi * freq_hz * (t - center_s))


def gen_beats(spec: BeatSpec, duration_s: float, sample_rate: int, seed: int) -> Waveform:
    """Periodic S1/S2 burst train with seeded inter-beat jitter."""
    spec.validate(sample_rate)
    if duration_s <= 0:
        raise InvalidSpecError("duration_s must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    period = 60.0 / spec.fhr_bpm
    beat_t = period / 2.0      # center the first beat away from the edge
    while beat_t < duration_s:
        out += _burst(t, beat_t, spec.s1_freq_hz, spec.burst_width_s)
        s2_t = beat_t + spec.s1_s2_gap_s
        if s2_t < duration_s:
            out += spec.s2_relative_amp * _burst(t, s2_t, spec.s2_freq_hz, spec.burst_width_s)
        step = period * (1.0 + spec.jitter * rng.standard_normal())
        beat_t += max(step, 0.25 * period)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= spec.amplitude / peak
    return Waveform(out, sample_rate) if n else Waveform(np.zeros(1), sample_rate)


class ArtifactKind(enum.Enum):
    HISS = "hiss"          # broadband white noise
    FRICTION = "friction"  # band-limited rumble below 40 Hz
    THUMP = "thump"        # sparse high-amplitude transients
    HUM = "hum"            # 50 Hz mains tone plus harmonics


def gen_artifact(kind: ArtifactKind, duration_s: float, sample_rate: int, seed: int) -> Waveform:
    """One artifact waveform, normalized to 0.8 peak, seeded-deterministic."""
    if duration_s <= 0:
        raise InvalidSpecError("duration_s must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    if kind is ArtifactKind.HISS:
        out = rng.standard_normal(n)
    elif kind is ArtifactKind.FRICTION:
        spectrum = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
        spectrum[freqs > 40.0] = 0.0
        out = np.fft.irfft(spectrum, n=n)
    elif kind is ArtifactKind.THUMP:
        out = np.zeros(n)
        rate_hz = 1.5
        expected = max(1, int(duration_s * rate_hz))
        times = np.sort(rng.uniform(0.0, duration_s, size=expected))
        for t0 in times:
            idx = int(t0 * sample_rate)
            length = int(0.03 * sample_rate)
            seg = np.exp(-np.arange(length) / (0.004 * sample_rate))
            seg *= np.sin(2.0 * np.pi * 35.0 * np.arange(length) / sample_rate)
            end = min(n, idx + length)
            out[idx:end] += seg[: end - idx]
    elif kind is ArtifactKind.HUM:
        out = (np.sin(2.0 * np.pi * 50.0 * t)
               + 0.4 * np.sin(2.0 * np.pi * 150.0 * t)
               + 0.2 * np.sin(2.0 * np.pi * 250.0 * t))
    else:
        raise InvalidSpecError(f"unknown artifact kind {kind!r}")
    peak = np.max(np.abs(out))
    if peak > 0:
        out = 0.8 * out / peak
    return Waveform(out, sample_rate)


def add_noise_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Mix noise into clean at an exact measured SNR."""
    if len(clean) != len(noise):
        raise InvalidSpecError("clean and noise must have equal length")
    p_signal = float(np.mean(clean.samples**2))
    p_noise = float(np.mean(noise.samples**2))
    if p_noise == 0:
        return clean
    scale = np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform(clean.samples + scale * noise.samples, clean.sample_rate_hz)


@dataclass(frozen=True)
class ClassDeltaSpec:
    """How the two classes differ, plus per-subject nuisance scales.

    The base amplitude leaves headroom for the gain range so generated
    segments stay inside [-1, 1] without clipping.
    """

    fhr_delta_bpm: float = 20.0
    s1_freq_delta_hz: float = 0.0
    base: BeatSpec = BeatSpec(fhr_bpm=130.0, amplitude=0.45)
    subject_fhr_sd_bpm: float = 2.0
    gain_range: tuple[float, float] = (0.5, 2.0)   # log-uniform per subject
    noise_snr_db: float | None = 15.0              # hiss mixed into every segment
    segment_s: float = 7.0
    sample_rate: int = 4000


def gen_dataset(
    n_subjects_per_class: int,
    segs_per_subject: int,
    class_delta: ClassDeltaSpec = ClassDeltaSpec(),
    seed: int = 0,
) -> LabeledDataset:
    """Two-class labeled segment corpus with per-subject nuisance variation.

    Class Male uses the base beat spec; class Female shifts FHR (and
    optionally the S1 frequency) by the configured deltas. Each subject
    draws a gain in ``gain_range`` (log-uniform) and a baseline FHR offset,
    so subject identity is learnable and grouped protocols matter.
    """
    if n_subjects_per_class < 1 or segs_per_subject < 1:
        raise InvalidSpecError("counts must be >= 1")
    rng = np.random.default_rng(seed)
    sr = class_delta.sample_rate
    items: list[Segment] = []
    subject_no = 0
    for gender in (Gender.MALE, Gender.FEMALE):
        if gender is Gender.MALE:
            class_spec = class_delta.base
        else:
            class_spec = replace(
                class_delta.base,
                fhr_bpm=class_delta.base.fhr_bpm + class_delta.fhr_delta_bpm,
                s1_freq_hz=class_delta.base.s1_freq_hz + class_delta.s1_freq_delta_hz,
            )
        for _ in range(n_subjects_per_class):
            sid = f"s{subject_no:04d}"
            subject_no += 1
            lo, hi = class_delta.gain_range
            gain = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            fhr = float(np.clip(
                class_spec.fhr_bpm + class_delta.subject_fhr_sd_bpm * rng.standard_normal(),
                60.0, 240.0,
            ))
            subject_spec = replace(class_spec, fhr_bpm=fhr)
            for s in range(segs_per_subject):
                seg_seed = int(rng.integers(0, 2**31 - 1))
                beats = gen_beats(subject_spec, class_delta.segment_s, sr, seg_seed)
                samples = beats.samples * gain
                w = Waveform(samples, sr)
                if class_delta.noise_snr_db is not None:
                    hiss = gen_artifact(ArtifactKind.HISS, class_delta.segment_s, sr,
                                        seg_seed + 1)
                    w = add_noise_at_snr(w, hiss, class_delta.noise_snr_db)
                peak = float(np.max(np.abs(w.samples)))
                if peak > 0.99:   # keep WAV materialization clip-free
                    w = Waveform(w.samples * (0.99 / peak), sr)
                items.append(Segment(
                    waveform=w,
                    subject_id=sid,
                    gender=gender,
                    start_s=s * class_delta.segment_s,
                    end_s=(s + 1) * class_delta.segment_s,
                ))
    return LabeledDataset.from_segments(items)


def write_corpus(data: LabeledDataset, out_dir, *, save_wav_fn=None) -> str:
    """Materialize a segment dataset as per-subject WAVs plus a manifest CSV.

    Segments of each subject are concatenated into one recording file, so
    the written corpus ingests through the same manifest path as real data.
    Returns the manifest path.
    """
    from pathlib import Path

    from .audio_io import save_wav

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = save_wav_fn or save_wav
    records: list[SubjectRecord] = []
    for sid, items in data.by_subject().items():
        segs = [item.payload for item in items]
        samples = np.concatenate([s.waveform.samples for s in segs])
        rate = segs[0].waveform.sample_rate_hz
        w = Waveform(samples, rate)
        path = out_dir / f"{sid}.wav"
        writer(w, path)
        records.append(SubjectRecord(
            subject_id=sid,
            gender=segs[0].gender,
            file_path=path.name,   # relative to the manifest's directory
            duration_s=w.duration_s,
        ))
    manifest = out_dir / "manifest.csv"
    save_manifest(records, manifest)
    return str(manifest)
