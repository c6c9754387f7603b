"""Statistical features, the three-domain feature blocks, and feature tables.

The seven scalar statistics (mean, variance, skewness, kurtosis, spectral
entropy, energy, RMS) follow the exact formulas used throughout the
pipeline; skewness is Pearson's second coefficient and variance/kurtosis
use the N-1 sample normalization. The strict scalar functions raise on
degenerate input; :func:`stat_set` instead applies the documented policy
(zero for moment statistics when variance is zero, zero entropy for an
all-zero spectrum) so batch extraction stays total.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform
from .container import load_container, save_container
from .dataset import Gender
from .errors import (
    EmptyInputError,
    EmptyMatrixError,
    InvalidConfigError,
    InvalidFrameError,
    TooFewSamplesError,
    ZeroSpectrumError,
    ZeroVarianceError,
)
from .spectral import ChromaConfig, CqtConfig, MelConfig, MfccConfig
from .spectral import chroma as chroma_matrix
from .spectral import cqt as cqt_matrix
from .spectral import mel_spectrogram, mfcc as mfcc_matrix
from .wavelets import dwt


def _vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    return v


def mean(x) -> float:
    x = _vector(x)
    if x.size == 0:
        raise EmptyInputError("mean of empty vector")
    return float(x.sum() / x.size)


def variance(x) -> float:
    """Sample variance with N-1 normalization."""
    x = _vector(x)
    if x.size < 2:
        raise TooFewSamplesError("variance needs at least 2 samples")
    mu = x.sum() / x.size
    return float(((x - mu) ** 2).sum() / (x.size - 1))


def _median_low(x: np.ndarray) -> float:
    """Lower-middle element for even lengths; deterministic tie-breaking."""
    s = np.sort(x)
    return float(s[(x.size - 1) // 2])


def skewness(x) -> float:
    """Pearson's second skewness: 3 (mean - median) / std."""
    x = _vector(x)
    sigma = np.sqrt(variance(x))
    if sigma == 0.0:
        raise ZeroVarianceError("skewness undefined for zero-variance input")
    return float(3.0 * (mean(x) - _median_low(x)) / sigma)


def kurtosis(x) -> float:
    """Fourth central moment over (N-1) * s^4, s the sample std."""
    x = _vector(x)
    s2 = variance(x)
    if s2 == 0.0:
        raise ZeroVarianceError("kurtosis undefined for zero-variance input")
    mu = mean(x)
    return float(((x - mu) ** 4).sum() / ((x.size - 1) * s2 * s2))


def spectral_entropy(x) -> float:
    """Shannon entropy (natural log) of the normalized one-sided power spectrum."""
    x = _vector(x)
    if x.size == 0:
        raise EmptyInputError("spectral entropy of empty vector")
    power = np.abs(np.fft.rfft(x)) ** 2 / x.size
    total = power.sum()
    if total <= 0.0:
        raise ZeroSpectrumError("spectral entropy undefined for a zero spectrum")
    p = power / total
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def energy(x) -> float:
    x = _vector(x)
    if x.size == 0:
        raise EmptyInputError("energy of empty vector")
    return float((np.abs(x) ** 2).sum())


def rms(x) -> float:
    x = _vector(x)
    if x.size == 0:
        raise EmptyInputError("rms of empty vector")
    return float(np.sqrt((x * x).sum() / x.size))


def zcr(x, frame_len: int) -> tuple[np.ndarray, float]:
    """Per-frame zero-crossing count and its mean over frames.

    Frame t spans samples [t*K, (t+1)*K) and the count includes the pair
    crossing into the next frame, so the number of complete frames is
    floor((N - 1) / K); the trailing partial frame is dropped.
    """
    x = _vector(x)
    if frame_len < 2:
        raise InvalidFrameError("zcr frame length must be >= 2")
    n_frames = (x.size - 1) // frame_len
    if n_frames == 0:
        raise EmptyInputError("signal shorter than one zcr frame")
    signs = np.where(x >= 0.0, 1.0, -1.0)
    jumps = np.abs(np.diff(signs)) * 0.5
    per_frame = np.array(
        [jumps[t * frame_len: (t + 1) * frame_len].sum() for t in range(n_frames)]
    )
    return per_frame, float(per_frame.mean())


STAT_NAMES = ("mean", "variance", "skewness", "kurtosis", "spectral_entropy", "energy", "rms")


@dataclass(frozen=True)
class StatSet:
    mean: float
    variance: float
    skewness: float
    kurtosis: float
    spectral_entropy: float
    energy: float
    rms: float
    degenerate: bool = False   # policy values substituted for undefined moments

    def as_array(self) -> np.ndarray:
        return np.array([
            self.mean, self.variance, self.skewness, self.kurtosis,
            self.spectral_entropy, self.energy, self.rms,
        ])


def stat_set(x) -> StatSet:
    """The seven statistics with the degenerate-input policy applied."""
    x = _vector(x)
    if x.size == 0:
        raise EmptyInputError("stat_set of empty vector")
    mu = mean(x)
    var = variance(x)
    degenerate = False
    if var == 0.0:
        skew = kurt = 0.0
        degenerate = True
    else:
        skew = skewness(x)
        kurt = kurtosis(x)
    try:
        ent = spectral_entropy(x)
    except ZeroSpectrumError:
        ent = 0.0
        degenerate = True
    return StatSet(mu, var, skew, kurt, ent, energy(x), rms(x), degenerate)


# --- feature vectors ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != len(self.schema):
            raise ValueError("values and schema must have equal length")
        if len(set(self.schema)) != len(self.schema):
            raise ValueError("schema names must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schema", tuple(self.schema))

    def __len__(self) -> int:
        return self.values.size

    @staticmethod
    def concat(parts: list["FeatureVector"]) -> "FeatureVector":
        values = np.concatenate([p.values for p in parts]) if parts else np.empty(0)
        schema: list[str] = []
        for p in parts:
            schema.extend(p.schema)
        return FeatureVector(values, tuple(schema))


class Summary(enum.Enum):
    PER_BIN_MEAN = "per_bin_mean"


def flatten_acoustic(matrix: np.ndarray, summary: Summary = Summary.PER_BIN_MEAN,
                     prefix: str = "acoustic") -> FeatureVector:
    """Reduce a (frames, bins) matrix to one value per bin."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise EmptyMatrixError("expected a non-empty (frames, bins) matrix")
    if summary is not Summary.PER_BIN_MEAN:
        raise InvalidConfigError(f"unsupported summary {summary}")
    values = m.mean(axis=0)
    schema = tuple(f"{prefix}.bin{i}.mean" for i in range(values.size))
    return FeatureVector(values, schema)


# --- domain blocks ------------------------------------------------------------

@dataclass(frozen=True)
class FeatureConfig:
    """Every knob the three-domain extraction depends on."""

    mel: MelConfig = field(default_factory=MelConfig)
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    chroma: ChromaConfig = field(default_factory=ChromaConfig)
    cqt: CqtConfig = field(default_factory=CqtConfig)
    wavelet: str = "coif1"
    dwt_levels: int = 3
    n_bands: int = 5
    band_width_hz: float = 300.0
    include_zcr: bool = False    # optional 12th time-domain feature
    zcr_frame_len: int = 512


@dataclass(frozen=True)
class AcousticMatrices:
    """The four acoustic representations of one denoised segment."""

    chroma: np.ndarray
    mel: np.ndarray
    mfcc: np.ndarray
    cqt: np.ndarray

    @classmethod
    def compute(cls, w: Waveform, cfg: FeatureConfig) -> "AcousticMatrices":
        return cls(
            chroma=chroma_matrix(w, cfg.chroma),
            mel=mel_spectrogram(w, cfg.mel),
            mfcc=mfcc_matrix(w, cfg.mfcc),
            cqt=cqt_matrix(w, cfg.cqt),
        )


def _stat_block(x, prefix: str) -> FeatureVector:
    values = stat_set(x).as_array()
    schema = tuple(f"{prefix}.{name}" for name in STAT_NAMES)
    return FeatureVector(values, schema)


def time_features(s_d: Waveform, acoustic: AcousticMatrices,
                  cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Time-domain block: seven statistics plus the four acoustic grand means."""
    parts = [_stat_block(s_d.samples, "time")]
    means = FeatureVector(
        np.array([
            float(acoustic.chroma.mean()) if acoustic.chroma.size else 0.0,
            float(acoustic.mel.mean()) if acoustic.mel.size else 0.0,
            float(acoustic.mfcc.mean()) if acoustic.mfcc.size else 0.0,
            float(acoustic.cqt.mean()) if acoustic.cqt.size else 0.0,
        ]),
        ("time.chroma_mean", "time.mel_mean", "time.mfcc_mean", "time.cqt_mean"),
    )
    parts.append(means)
    if cfg.include_zcr:
        _, zc = zcr(s_d.samples, cfg.zcr_frame_len)
        parts.append(FeatureVector(np.array([zc]), ("time.zcr",)))
    return FeatureVector.concat(parts)


def freq_features(s_d: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Frequency-domain block: statistics of spectrum magnitudes per band.

    The magnitude spectrum of the whole segment is split into ``n_bands``
    equal intervals of ``band_width_hz`` starting at 0 Hz; each band's
    magnitude values feed :func:`stat_set`.
    """
    top = cfg.n_bands * cfg.band_width_hz
    if s_d.sample_rate_hz < 2 * top:
        raise InvalidConfigError(
            f"sample rate {s_d.sample_rate_hz} cannot cover bands up to {top} Hz"
        )
    mags = np.abs(np.fft.rfft(s_d.samples))
    freqs = np.fft.rfftfreq(len(s_d), d=1.0 / s_d.sample_rate_hz)
    parts = []
    for b in range(cfg.n_bands):
        lo, hi = b * cfg.band_width_hz, (b + 1) * cfg.band_width_hz
        band = mags[(freqs >= lo) & (freqs < hi)]
        if band.size < 2:
            raise InvalidConfigError(f"band {b} has fewer than 2 spectrum bins")
        parts.append(_stat_block(band, f"freq.band{b}"))
    return FeatureVector.concat(parts)


def tf_features(s_d: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Time-frequency block: statistics of each wavelet coefficient band."""
    dec = dwt(s_d.samples, cfg.wavelet, cfg.dwt_levels)
    parts = [_stat_block(dec.approximation, "tf.approx")]
    for i, detail in enumerate(dec.details):
        level = dec.levels - i    # details run coarse to fine
        parts.append(_stat_block(detail, f"tf.detail{level}"))
    return FeatureVector.concat(parts)


def full_statistical_vector(s_d: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """The statistical classifier's input: time stats + 35 freq + 28 tf values."""
    return FeatureVector.concat([
        _stat_block(s_d.samples, "time"),
        freq_features(s_d, cfg),
        tf_features(s_d, cfg),
    ])


# --- feature tables ------------------------------------------------------------

TABLE_FORMAT_VERSION = 1


@dataclass
class FeatureTable:
    """Rows of feature values with their provenance, ready for training."""

    X: np.ndarray
    schema: tuple[str, ...]
    subject_ids: list[str]
    genders: list[Gender]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise ValueError("X must be (rows, len(schema))")
        if not (self.X.shape[0] == len(self.subject_ids) == len(self.genders)):
            raise ValueError("row metadata length mismatch")

    def __len__(self) -> int:
        return self.X.shape[0]

    def labels(self) -> np.ndarray:
        return np.array([g.index for g in self.genders], dtype=np.int64)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.schema, "subject_id", "gender"])
            for row, sid, gender in zip(self.X, self.subject_ids, self.genders):
                writer.writerow([*(repr(float(v)) for v in row), sid, gender.value])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty feature table")
        header = rows[0]
        if header[-2:] != ["subject_id", "gender"]:
            raise ValueError(f"{path}: feature CSV must end with subject_id,gender")
        schema = tuple(header[:-2])
        X, sids, genders = [], [], []
        for row in rows[1:]:
            X.append([float(v) for v in row[: len(schema)]])
            sids.append(row[-2])
            genders.append(Gender.parse(row[-1]))
        return cls(np.asarray(X, dtype=np.float64), schema, sids, genders)

    def save(self, path: str | Path) -> None:
        """Columnar binary cache (fast reload, versioned)."""
        save_container(
            path,
            kind="feature_table",
            meta={
                "table_version": TABLE_FORMAT_VERSION,
                "schema": list(self.schema),
                "subject_ids": self.subject_ids,
                "genders": [g.value for g in self.genders],
            },
            arrays={"X": self.X},
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureTable":
        _, meta, arrays = load_container(path, expect_kind="feature_table")
        return cls(
            arrays["X"],
            tuple(meta["schema"]),
            list(meta["subject_ids"]),
            [Gender.parse(g) for g in meta["genders"]],
        )
