import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcg.audio_io import Waveform, moving_rms, save_wav
from fpcg.dataset import (
    Gender,
    LabeledDataset,
    SubjectRecord,
    balanced_sample,
    load_manifest,
    save_manifest,
    segment_recording,
)
from fpcg.errors import (
    ManifestParseError,
    MissingFileError,
    TooShortError,
    UnknownGenderError,
)
from fpcg.synth import BeatSpec, gen_beats


def write_manifest(path, rows, header="subject_id,gender,file_path,duration_s"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def wav_file(tmp_path):
    path = tmp_path / "a.wav"
    save_wav(Waveform(np.zeros(8000), 8000), path)
    return path


class TestManifest:
    def test_roundtrip(self, tmp_path, wav_file):
        records = [
            SubjectRecord("s1", Gender.MALE, str(wav_file), 1.0),
            SubjectRecord("s2", Gender.FEMALE, str(wav_file), 1.0),
        ]
        mpath = tmp_path / "m.csv"
        save_manifest(records, mpath)
        ds = load_manifest(mpath)
        assert len(ds) == 2
        assert ds.items[0].subject_id == "s1"
        assert ds.items[1].gender is Gender.FEMALE

    def test_comments_and_case_insensitive_gender(self, tmp_path, wav_file):
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, [
            "# a comment",
            f"s1,m,{wav_file.name},1.0",
            f"s2,F,{wav_file.name},1.0",
        ])
        ds = load_manifest(mpath)
        assert [it.gender for it in ds] == [Gender.MALE, Gender.FEMALE]

    def test_empty_file_is_parse_error(self, tmp_path):
        mpath = tmp_path / "m.csv"
        mpath.write_text("", encoding="utf-8")
        with pytest.raises(ManifestParseError):
            load_manifest(mpath)

    def test_unknown_gender_with_line_number(self, tmp_path, wav_file):
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, [f"s1,X,{wav_file.name},1.0"])
        with pytest.raises(UnknownGenderError) as err:
            load_manifest(mpath)
        assert err.value.line_no == 2

    def test_duplicate_pair_rejected(self, tmp_path, wav_file):
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, [
            f"s1,M,{wav_file.name},1.0",
            f"s1,M,{wav_file.name},1.0",
        ])
        with pytest.raises(ManifestParseError):
            load_manifest(mpath)

    def test_missing_file(self, tmp_path):
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, ["s1,M,ghost.wav,1.0"])
        with pytest.raises(MissingFileError):
            load_manifest(mpath)

    def test_bad_duration(self, tmp_path, wav_file):
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, [f"s1,M,{wav_file.name},soon"])
        with pytest.raises(ManifestParseError):
            load_manifest(mpath)

    def test_full_cohort_manifest(self, tmp_path, wav_file):
        # a balanced 102-subject cohort loads into 102 records
        rows = [
            f"s{i:03d},{'M' if i % 2 == 0 else 'F'},{wav_file.name},1.0"
            for i in range(102)
        ]
        mpath = tmp_path / "m.csv"
        write_manifest(mpath, rows)
        ds = load_manifest(mpath)
        assert len(ds) == 102
        assert len(ds.subjects()) == 102
        labels = ds.labels()
        assert (labels == 0).sum() == (labels == 1).sum() == 51


def record(sid="s0", gender=Gender.MALE):
    return SubjectRecord(sid, gender, "unused.wav", 0.0)


class TestSegmentation:
    def test_short_recording_single_segment(self):
        w = gen_beats(BeatSpec(), 5.0, 4000, seed=0)
        segs = segment_recording(w, record())
        assert len(segs) == 1
        assert np.array_equal(segs[0].waveform.samples, w.samples)
        assert segs[0].subject_id == "s0"

    def test_too_short(self):
        w = Waveform(np.zeros(1000), 4000)
        with pytest.raises(TooShortError):
            segment_recording(w, record())

    def test_boundaries_fall_in_silence(self):
        # 21 s of beat bursts with generous silences between beats
        rate = 4000
        w = gen_beats(BeatSpec(fhr_bpm=80.0, jitter=0.0), 21.0, rate, seed=1)
        segs = segment_recording(w, record(), 7.0)
        assert len(segs) == 3
        env = moving_rms(w.samples, int(0.05 * rate))
        threshold = 0.1 * env.max()
        for seg in segs[:-1]:
            cut = int(seg.end_s * rate)
            assert env[cut] <= threshold

    def test_minimum_segment_count_for_90s(self):
        w = gen_beats(BeatSpec(fhr_bpm=140.0), 90.0, 4000, seed=2)
        segs = segment_recording(w, record(), 7.0)
        assert len(segs) >= 12

    def test_metadata_inherited(self):
        w = gen_beats(BeatSpec(), 10.0, 4000, seed=3)
        segs = segment_recording(w, record("subj9", Gender.FEMALE))
        assert all(s.subject_id == "subj9" and s.gender is Gender.FEMALE for s in segs)

    @given(duration=st.floats(min_value=1.5, max_value=30.0),
           fhr=st.floats(min_value=70.0, max_value=220.0))
    @settings(max_examples=15, deadline=None)
    def test_never_exceeds_max_length(self, duration, fhr):
        w = gen_beats(BeatSpec(fhr_bpm=fhr), duration, 2000, seed=4)
        segs = segment_recording(w, record(), 7.0)
        assert segs, "segmentation must produce at least one segment"
        for seg in segs:
            assert seg.end_s - seg.start_s <= 7.0 + 1e-9

    def test_coverage_up_to_trailing_remainder(self):
        rate = 4000
        w = gen_beats(BeatSpec(fhr_bpm=120.0), 20.0, rate, seed=5)
        segs = segment_recording(w, record(), 7.0)
        assert segs[0].start_s == 0.0
        for a, b in zip(segs[:-1], segs[1:]):
            assert b.start_s == pytest.approx(a.end_s, abs=1e-9)
        assert (w.duration_s - segs[-1].end_s) < 1.0


class TestBalancedSample:
    def make_dataset(self):
        items = []
        for i in range(10):
            gender = Gender.MALE if i < 6 else Gender.FEMALE
            items.append(SubjectRecord(f"s{i}", gender, "x.wav", 1.0))
        return LabeledDataset.from_records(items)

    def test_balanced_counts(self):
        ds = balanced_sample(self.make_dataset(), 3, seed=0)
        labels = ds.labels()
        assert (labels == 0).sum() == 3
        assert (labels == 1).sum() == 3

    def test_deterministic(self):
        a = balanced_sample(self.make_dataset(), 3, seed=5)
        b = balanced_sample(self.make_dataset(), 3, seed=5)
        assert [it.subject_id for it in a] == [it.subject_id for it in b]

    def test_insufficient(self):
        with pytest.raises(ValueError):
            balanced_sample(self.make_dataset(), 5, seed=0)
