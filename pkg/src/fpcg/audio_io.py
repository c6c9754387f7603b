"""Waveform container plus WAV reading/writing, resampling, and augmentation.

Canonical audio format throughout the package: mono float64 samples in
[-1, 1] with an integer sample rate. Files are written as 16-bit PCM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample as _fft_resample
from scipy.signal import resample_poly

from .errors import (
    EmptyAudioError,
    InvalidRateError,
    UnsupportedEncodingError,
)

_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """A mono sampled signal. Samples are float64 and read-only."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("Waveform samples must be 1-D")
        if samples.size == 0:
            raise EmptyAudioError("Waveform must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Waveform samples must be finite")
        rate = int(self.sample_rate_hz)
        if rate <= 0:
            raise InvalidRateError(f"sample_rate_hz must be positive, got {rate}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def replace_samples(self, samples: np.ndarray) -> "Waveform":
        """New Waveform with the same rate and different samples."""
        return Waveform(samples, self.sample_rate_hz)


def load_wav(path: str | Path) -> Waveform:
    """Load a PCM WAV file as a mono Waveform scaled to [-1, 1].

    Multi-channel audio is averaged to mono. The file's sample rate is
    preserved; integer encodings are rescaled by their full-scale value.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise UnsupportedEncodingError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero audio frames")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)   # float WAV
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    return Waveform(samples, int(rate))


def save_wav(w: Waveform, path: str | Path) -> None:
    """Write a Waveform as mono 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(w.samples, -1.0, 1.0)
    ints = np.clip(np.round(clipped * _PCM_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), w.sample_rate_hz, ints)


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Resample with band-limited (windowed-sinc polyphase) interpolation.

    Duration is preserved to within one sample period. Resampling to the
    waveform's own rate returns it unchanged.
    """
    target_hz = int(target_hz)
    if target_hz <= 0:
        raise InvalidRateError(f"target_hz must be positive, got {target_hz}")
    if target_hz == w.sample_rate_hz:
        return w
    g = math.gcd(target_hz, w.sample_rate_hz)
    up, down = target_hz // g, w.sample_rate_hz // g
    out = resample_poly(w.samples, up, down, padtype="edge")
    return Waveform(out, target_hz)


@dataclass(frozen=True)
class PitchShift:
    """Shift fundamental frequency by ``2 ** (semitones / 12)``."""

    semitones: float


@dataclass(frozen=True)
class AddNoise:
    """Add zero-mean Gaussian noise at the given SNR relative to the input."""

    snr_db: float


Augmentation = PitchShift | AddNoise


def augment(w: Waveform, kind: Augmentation, seed: int) -> Waveform:
    """Apply one augmentation, reproducibly for a fixed seed.

    PitchShift resamples by the pitch factor and corrects the length back
    to the input's (tiling when shorter, cropping when longer). AddNoise
    scales the noise so measured SNR equals ``snr_db``.
    """
    n = len(w)
    if isinstance(kind, PitchShift):
        factor = 2.0 ** (kind.semitones / 12.0)
        new_len = max(1, int(round(n / factor)))
        shifted = _fft_resample(w.samples, new_len)
        if new_len < n:
            reps = int(np.ceil(n / new_len))
            shifted = np.tile(shifted, reps)[:n]
        elif new_len > n:
            shifted = shifted[:n]
        return Waveform(shifted, w.sample_rate_hz)
    if isinstance(kind, AddNoise):
        rng = np.random.default_rng(seed)
        p_signal = float(np.mean(w.samples**2))
        sigma = math.sqrt(p_signal / (10.0 ** (kind.snr_db / 10.0)))
        noise = rng.standard_normal(n) * sigma
        return Waveform(w.samples + noise, w.sample_rate_hz)
    raise TypeError(f"unknown augmentation {kind!r}")


def moving_rms(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving RMS envelope with the given window in samples."""
    window = max(1, int(window))
    power = np.asarray(x, dtype=np.float64) ** 2
    kernel = np.ones(window) / window
    return np.sqrt(np.convolve(power, kernel, mode="same"))
