"""Spectral primitives: FFT, STFT/ISTFT, mel spectrogram, MFCC, chroma, CQT.

All transforms are pure functions of (waveform, config) and return float64
or complex128 arrays. The STFT pads and centers frames so that the inverse
reconstructs every sample of the original signal, not just the interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct as _dct

from .audio_io import Waveform
from .errors import InvalidConfigError, InvalidWindowError, NonInvertibleConfigError


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fft(x: np.ndarray) -> np.ndarray:
    """DFT of a real vector, zero-padded to the next power of two."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("fft expects a non-empty 1-D real vector")
    n = _next_pow2(x.size)
    return np.fft.fft(x, n=n)


def inverse_fft(spectrum: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse DFT returning the real part, truncated to ``n`` samples."""
    out = np.fft.ifft(np.asarray(spectrum, dtype=np.complex128)).real
    return out[:n] if n is not None else out


def hann_window(window_len: int) -> np.ndarray:
    """Periodic Hann window (COLA-friendly)."""
    m = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * m / window_len)


@dataclass(frozen=True)
class TimeFrequencyGrid:
    """One-sided complex STFT indexed (frame, frequency_bin)."""

    bins: np.ndarray
    frame_hop: int
    window_len: int
    sample_rate_hz: int
    n_samples: int
    pad: int

    def __post_init__(self):
        if self.bins.ndim != 2 or self.bins.shape[1] != self.window_len // 2 + 1:
            raise ValueError("grid must be (frames, window_len/2 + 1)")

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    @property
    def bin_freqs_hz(self) -> np.ndarray:
        return np.fft.rfftfreq(self.window_len, d=1.0 / self.sample_rate_hz)

    def with_bins(self, bins: np.ndarray) -> "TimeFrequencyGrid":
        """Same geometry, different complex content (for masking)."""
        return TimeFrequencyGrid(
            bins, self.frame_hop, self.window_len, self.sample_rate_hz,
            self.n_samples, self.pad,
        )


def _check_window(window_len: int, hop: int) -> None:
    if window_len < 2 or (window_len & (window_len - 1)) != 0:
        raise InvalidWindowError(f"window_len must be a power of two, got {window_len}")
    if hop < 1 or hop > window_len:
        raise InvalidWindowError(f"hop must be in [1, window_len], got {hop}")


def stft(w: Waveform, window_len: int = 1024, hop: int = 256,
         pad: bool = True) -> TimeFrequencyGrid:
    """Hann-windowed one-sided STFT.

    With ``pad`` (the default) the signal is reflect-padded by one window
    on each side so that, for ``hop <= window_len / 2`` with hop dividing
    the window, the inverse reconstructs every sample to machine precision.
    ``pad=False`` frames the raw signal only (feature extraction framing);
    such grids are generally not invertible at the edges.
    """
    _check_window(window_len, hop)
    x = w.samples
    if pad:
        pad_len = window_len
        padded = np.pad(x, pad_len, mode="reflect" if x.size > 1 else "edge")
    else:
        pad_len = 0
        if x.size < window_len:
            raise InvalidWindowError(
                f"signal of {x.size} samples is shorter than the window ({window_len})"
            )
        padded = x
    # padded mode: last frame covers the tail; raw mode: full frames only
    if pad:
        n_frames = 1 + math.ceil(max(padded.size - window_len, 0) / hop)
    else:
        n_frames = 1 + (padded.size - window_len) // hop
    total = window_len + (n_frames - 1) * hop
    padded = np.pad(padded, (0, max(0, total - padded.size)))
    padded = padded[:total]
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_len)[::hop]
    win = hann_window(window_len)
    bins = np.fft.rfft(frames * win, axis=1)
    return TimeFrequencyGrid(bins, hop, window_len, w.sample_rate_hz, x.size, pad_len)


def istft(grid: TimeFrequencyGrid) -> Waveform:
    """Weighted overlap-add inverse with window-sum-squared normalization."""
    win = hann_window(grid.window_len)
    frames = np.fft.irfft(grid.bins, n=grid.window_len, axis=1) * win
    total = grid.window_len + (grid.n_frames - 1) * grid.frame_hop
    out = np.zeros(total)
    norm = np.zeros(total)
    win_sq = win * win
    for i in range(grid.n_frames):
        start = i * grid.frame_hop
        out[start: start + grid.window_len] += frames[i]
        norm[start: start + grid.window_len] += win_sq
    lo, hi = grid.pad, grid.pad + grid.n_samples
    core_norm = norm[lo:hi]
    if core_norm.size != grid.n_samples or np.min(core_norm) < 1e-10:
        raise NonInvertibleConfigError(
            "window/hop combination leaves uncovered samples; use hop <= window_len/2"
        )
    return Waveform(out[lo:hi] / core_norm, grid.sample_rate_hz)


def power_spectrogram(w: Waveform, window_len: int, hop: int) -> np.ndarray:
    """Feature-style power spectrogram: raw framing, no reconstruction pad."""
    g = stft(w, window_len, hop, pad=False)
    return np.abs(g.bins) ** 2


# --- mel / MFCC ---------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 64
    f_min_hz: float = 0.0
    f_max_hz: float = 2000.0
    window_len: int = 1024
    hop: int = 256
    log_compress: bool = True    # log(1 + S) on the power-mel matrix

    def validate(self, sample_rate_hz: int) -> None:
        if self.n_mels < 1:
            raise InvalidConfigError("n_mels must be >= 1")
        nyquist = sample_rate_hz / 2.0
        if not (0.0 <= self.f_min_hz < self.f_max_hz <= nyquist):
            raise InvalidConfigError(
                f"need 0 <= f_min < f_max <= Nyquist ({nyquist} Hz)"
            )


def mel_filterbank(cfg: MelConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular peak-one filters, (n_mels, n_bins)."""
    n_bins = cfg.window_len // 2 + 1
    bin_freqs = np.fft.rfftfreq(cfg.window_len, d=1.0 / sample_rate_hz)
    mels = np.linspace(hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz), cfg.n_mels + 2)
    edges = mel_to_hz(mels)
    bank = np.zeros((cfg.n_mels, n_bins))
    for j in range(cfg.n_mels):
        left, center, right = edges[j], edges[j + 1], edges[j + 2]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        bank[j] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def mel_spectrogram(w: Waveform, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Power mel spectrogram, (frames, n_mels); log(1+S) when configured."""
    cfg.validate(w.sample_rate_hz)
    power = power_spectrogram(w, cfg.window_len, cfg.hop)
    mel = power @ mel_filterbank(cfg, w.sample_rate_hz).T
    return np.log1p(mel) if cfg.log_compress else mel


@dataclass(frozen=True)
class MfccConfig:
    n_coeffs: int = 13
    mel: MelConfig = field(default_factory=lambda: MelConfig(log_compress=False))
    log_floor: float = 1e-10

    def validate(self, sample_rate_hz: int) -> None:
        self.mel.validate(sample_rate_hz)
        if not (1 <= self.n_coeffs <= self.mel.n_mels):
            raise InvalidConfigError("need 1 <= n_coeffs <= n_mels")


def mfcc(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Orthonormal DCT-II of natural-log mel energies, (frames, n_coeffs)."""
    cfg.validate(w.sample_rate_hz)
    mel_cfg = cfg.mel if not cfg.mel.log_compress else MelConfig(
        cfg.mel.n_mels, cfg.mel.f_min_hz, cfg.mel.f_max_hz,
        cfg.mel.window_len, cfg.mel.hop, log_compress=False,
    )
    energies = mel_spectrogram(w, mel_cfg)
    log_mel = np.log(np.maximum(energies, cfg.log_floor))
    return _dct(log_mel, type=2, axis=1, norm="ortho")[:, : cfg.n_coeffs]


# --- chroma ---------------------------------------------------------------

@dataclass(frozen=True)
class ChromaConfig:
    window_len: int = 1024
    hop: int = 256
    f_min_hz: float = 27.5      # bins below this are ignored (log-pitch undefined at DC)
    normalize: bool = True

    def validate(self, sample_rate_hz: int) -> None:
        if self.f_min_hz <= 0:
            raise InvalidConfigError("f_min_hz must be positive")
        if self.f_min_hz >= sample_rate_hz / 2.0:
            raise InvalidConfigError("f_min_hz must lie below Nyquist")


N_PITCH_CLASSES = 12


def pitch_class_of(freq_hz: np.ndarray) -> np.ndarray:
    """Chromatic pitch class with C = 0 (A440 maps to class 9)."""
    midi = 69.0 + 12.0 * np.log2(np.asarray(freq_hz, dtype=np.float64) / 440.0)
    return np.mod(np.round(midi).astype(np.int64), N_PITCH_CLASSES)


def chroma(w: Waveform, cfg: ChromaConfig = ChromaConfig()) -> np.ndarray:
    """Octave-folded pitch-class energy profile, (frames, 12)."""
    cfg.validate(w.sample_rate_hz)
    power = power_spectrogram(w, cfg.window_len, cfg.hop)
    freqs = np.fft.rfftfreq(cfg.window_len, d=1.0 / w.sample_rate_hz)
    keep = freqs >= cfg.f_min_hz
    classes = pitch_class_of(freqs[keep])
    out = np.zeros((power.shape[0], N_PITCH_CLASSES))
    for c in range(N_PITCH_CLASSES):
        mask = classes == c
        if np.any(mask):
            out[:, c] = power[:, keep][:, mask].sum(axis=1)
    if cfg.normalize:
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        nonzero = norms[:, 0] > 0
        out[nonzero] /= norms[nonzero]
    return out


# --- constant-Q ---------------------------------------------------------------

@dataclass(frozen=True)
class CqtConfig:
    f_min_hz: float = 32.70319566257483   # C1
    f_max_hz: float = 2000.0
    bins_per_octave: int = 12
    hop: int = 256

    def validate(self, sample_rate_hz: int) -> None:
        if self.bins_per_octave < 1:
            raise InvalidConfigError("bins_per_octave must be >= 1")
        if self.f_min_hz <= 0:
            raise InvalidConfigError("f_min_hz must be positive")
        if self.f_max_hz > sample_rate_hz / 2.0 + 1e-9:
            raise InvalidConfigError("f_max_hz must not exceed Nyquist")
        if self.f_max_hz <= self.f_min_hz:
            raise InvalidConfigError("f_max_hz must exceed f_min_hz")

    def n_bins(self) -> int:
        return int(math.floor(self.bins_per_octave * math.log2(self.f_max_hz / self.f_min_hz))) + 1


def cqt_frequencies(cfg: CqtConfig) -> np.ndarray:
    k = np.arange(cfg.n_bins())
    return cfg.f_min_hz * 2.0 ** (k / cfg.bins_per_octave)


def cqt(w: Waveform, cfg: CqtConfig = CqtConfig()) -> np.ndarray:
    """Constant-Q magnitude matrix, (frames, n_bins), geometric centers.

    Direct kernel summation: each bin correlates the signal with a
    Hann-windowed complex exponential of length Q * sr / f_k, centered on
    the frame instant. Q = 1 / (2^(1/bins_per_octave) - 1) for all bins.
    """
    cfg.validate(w.sample_rate_hz)
    sr = w.sample_rate_hz
    q = 1.0 / (2.0 ** (1.0 / cfg.bins_per_octave) - 1.0)
    freqs = cqt_frequencies(cfg)
    n = len(w)
    n_frames = 1 + (n - 1) // cfg.hop
    centers = np.arange(n_frames) * cfg.hop
    lengths = [min(int(math.ceil(q * sr / f)), n) for f in freqs]
    max_len = max(lengths)
    padded = np.pad(w.samples, max_len, mode="constant")
    out = np.empty((n_frames, freqs.size))
    for k, (f, n_k) in enumerate(zip(freqs, lengths)):
        m = np.arange(n_k)
        win = hann_window(n_k) if n_k > 1 else np.ones(1)
        kernel = win * np.exp(-2j * np.pi * f * m / sr)
        kernel *= 2.0 / win.sum()
        starts = centers + max_len - n_k // 2
        idx = starts[:, None] + m[None, :]
        out[:, k] = np.abs(padded[idx] @ kernel)
    return out
