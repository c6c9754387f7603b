"""Subject records, segments, labeled datasets, manifest IO, segmentation.

The manifest CSV is the ingestion contract for real recordings:

    subject_id,gender,file_path,duration_s

with gender tokens ``M``/``F`` (case-insensitive), UTF-8 encoding, and
``#`` comment lines ignored. ``file_path`` entries may be relative to the
manifest's own directory.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .audio_io import Waveform, moving_rms
from .errors import (
    ManifestParseError,
    MissingFileError,
    TooShortError,
    UnknownGenderError,
)


class Gender(enum.Enum):
    MALE = "M"
    FEMALE = "F"

    @classmethod
    def parse(cls, token: str) -> "Gender":
        t = token.strip().upper()
        if t in ("M", "MALE"):
            return cls.MALE
        if t in ("F", "FEMALE"):
            return cls.FEMALE
        raise ValueError(f"unknown gender token {token!r}")

    @property
    def index(self) -> int:
        """Fixed label index: Male = 0, Female = 1."""
        return 0 if self is Gender.MALE else 1


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    gender: Gender
    file_path: str
    duration_s: float

    def __post_init__(self):
        if not self.subject_id:
            raise ValueError("subject_id must be non-empty")


@dataclass(frozen=True)
class Segment:
    """A chunk of one subject's recording, carrying its provenance."""

    waveform: Waveform
    subject_id: str
    gender: Gender
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise ValueError("segment bounds must satisfy 0 <= start < end")


@dataclass(frozen=True)
class LabeledItem:
    payload: object
    gender: Gender
    subject_id: str


@dataclass
class LabeledDataset:
    """Ordered collection of labeled items (subject records, segments, ...)."""

    items: list[LabeledItem] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def subjects(self) -> list[str]:
        """Unique subject ids in first-seen order."""
        seen: dict[str, None] = {}
        for item in self.items:
            seen.setdefault(item.subject_id, None)
        return list(seen)

    def by_subject(self) -> dict[str, list[LabeledItem]]:
        groups: dict[str, list[LabeledItem]] = {}
        for item in self.items:
            groups.setdefault(item.subject_id, []).append(item)
        return groups

    def subject_gender(self) -> dict[str, Gender]:
        out: dict[str, Gender] = {}
        for item in self.items:
            out.setdefault(item.subject_id, item.gender)
        return out

    def labels(self) -> np.ndarray:
        return np.array([item.gender.index for item in self.items], dtype=np.int64)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.items[i] for i in indices])

    def filter_subjects(self, keep: set[str]) -> "LabeledDataset":
        return LabeledDataset([it for it in self.items if it.subject_id in keep])

    @classmethod
    def from_segments(cls, segments: list[Segment]) -> "LabeledDataset":
        return cls([LabeledItem(s, s.gender, s.subject_id) for s in segments])

    @classmethod
    def from_records(cls, records: list[SubjectRecord]) -> "LabeledDataset":
        return cls([LabeledItem(r, r.gender, r.subject_id) for r in records])


MANIFEST_HEADER = ["subject_id", "gender", "file_path", "duration_s"]


def load_manifest(path: str | Path, check_files: bool = True) -> LabeledDataset:
    """Parse a manifest CSV into a dataset of SubjectRecords.

    Rejects duplicate (subject_id, file_path) pairs, unknown gender tokens,
    and (when ``check_files``) rows pointing at nonexistent audio files.
    Errors carry the offending 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    records: list[SubjectRecord] = []
    seen: set[tuple[str, str]] = set()
    header_done = False
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if not header_done:
                cleaned = [c.strip().lower() for c in row]
                if cleaned != MANIFEST_HEADER:
                    raise ManifestParseError(
                        line_no, f"expected header {','.join(MANIFEST_HEADER)}"
                    )
                header_done = True
                continue
            if len(row) != 4:
                raise ManifestParseError(line_no, f"expected 4 fields, got {len(row)}")
            subject_id, gender_tok, file_path, duration_tok = (c.strip() for c in row)
            if not subject_id:
                raise ManifestParseError(line_no, "empty subject_id")
            try:
                gender = Gender.parse(gender_tok)
            except ValueError:
                raise UnknownGenderError(line_no, f"unknown gender {gender_tok!r}") from None
            try:
                duration_s = float(duration_tok)
            except ValueError:
                raise ManifestParseError(line_no, f"bad duration {duration_tok!r}") from None
            key = (subject_id, file_path)
            if key in seen:
                raise ManifestParseError(line_no, f"duplicate entry {key}")
            seen.add(key)
            resolved = Path(file_path)
            if not resolved.is_absolute():
                resolved = path.parent / resolved
            if check_files and not resolved.exists():
                raise MissingFileError(f"line {line_no}: missing audio file {resolved}")
            records.append(SubjectRecord(subject_id, gender, str(resolved), duration_s))
    if not header_done:
        raise ManifestParseError(1, "empty manifest")
    return LabeledDataset.from_records(records)


def save_manifest(records: list[SubjectRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow([r.subject_id, r.gender.value, r.file_path, f"{r.duration_s:.6f}"])


def segment_recording(
    w: Waveform,
    subject: SubjectRecord,
    max_len_s: float = 7.0,
    *,
    silence_fraction: float = 0.1,
    search_back_s: float = 1.5,
    envelope_window_s: float = 0.05,
) -> list[Segment]:
    """Chunk a recording into segments no longer than ``max_len_s``.

    Cut points are chosen on the smoothed RMS envelope: within a window
    reaching ``search_back_s`` before each maximum-length boundary, prefer
    the point nearest the boundary whose envelope sits below
    ``silence_fraction`` of the envelope maximum (a silence), falling back
    to the quietest point in the window, and to a hard cut if the window is
    degenerate. A trailing remainder shorter than the estimated beat period
    is dropped.
    """
    if w.duration_s < 1.0:
        raise TooShortError(f"recording of {w.duration_s:.3f} s is shorter than 1 s")
    rate = w.sample_rate_hz
    n = len(w)
    max_len = int(round(max_len_s * rate))

    def make(start: int, end: int) -> Segment:
        return Segment(
            waveform=Waveform(w.samples[start:end], rate),
            subject_id=subject.subject_id,
            gender=subject.gender,
            start_s=start / rate,
            end_s=end / rate,
        )

    if n <= max_len:
        return [make(0, n)]

    env = moving_rms(w.samples, int(envelope_window_s * rate))
    env_max = float(env.max())
    threshold = silence_fraction * env_max
    search_back = max(1, int(search_back_s * rate))

    cuts = [0]
    pos = 0
    while n - pos > max_len:
        bound = pos + max_len
        lo = max(pos + 1, bound - search_back)
        window = env[lo: bound + 1]
        below = np.nonzero(window <= threshold)[0]
        if below.size:
            cut = lo + int(below[-1])
        elif window.size:
            cut = lo + int(np.argmin(window))
        else:
            cut = bound
        cuts.append(cut)
        pos = cut

    tail = n - pos
    min_tail = int(_beat_period_s(env, rate) * rate)
    segments = [make(a, b) for a, b in zip(cuts[:-1], cuts[1:])]
    if tail >= max(1, min_tail):
        segments.append(make(pos, n))
    return segments


def _beat_period_s(env: np.ndarray, rate: int) -> float:
    """Median inter-peak interval of the envelope; 0.5 s when undetectable.

    Peaks are sought with a 250 ms minimum spacing, the plausible spacing
    for fetal heartbeats in the 120-160 bpm range.
    """
    peaks, _ = find_peaks(env, distance=max(1, int(0.25 * rate)), height=0.5 * env.max())
    if peaks.size < 2:
        return 0.5
    return float(np.median(np.diff(peaks)) / rate)


def balanced_sample(data: LabeledDataset, per_class: int, seed: int) -> LabeledDataset:
    """Seeded balanced subsample: ``per_class`` items of each gender.

    Stand-in for upstream corpus curation when more chunks exist than the
    experiment wants; selection is uniform without replacement.
    """
    rng = np.random.default_rng(seed)
    picked: list[int] = []
    for gender in (Gender.MALE, Gender.FEMALE):
        idx = [i for i, item in enumerate(data.items) if item.gender is gender]
        if len(idx) < per_class:
            raise ValueError(
                f"need {per_class} items of {gender.value}, have {len(idx)}"
            )
        chosen = rng.choice(len(idx), size=per_class, replace=False)
        picked.extend(idx[int(c)] for c in chosen)
    picked.sort()
    return data.subset(picked)
