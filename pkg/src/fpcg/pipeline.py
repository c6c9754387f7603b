"""Experiment orchestration: configs, presets, caching, and the run flow.

A run is described by a declarative JSON config (see ``RunConfig``), turns
into segments -> denoised segments -> per-view feature tables -> a fitted
stacking ensemble -> a metrics report, and leaves every artifact (models,
feature tables, report JSON, prediction CSV, figures) in the output
directory. Feature tables are cached by a content hash of the denoised
audio plus the feature configuration, so reruns and protocol variations
are cheap.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform, load_wav, resample, save_wav
from .classifiers import HyperParams, ModelKind, fit, predict_proba_matrix
from .dataset import (
    Gender,
    LabeledDataset,
    LabeledItem,
    Segment,
    balanced_sample,
    load_manifest,
    segment_recording,
)
from .denoise import (
    DaeTrainConfig,
    DcTrainConfig,
    DenoiseMethod,
    GateConfig,
    ModelSet,
    denoise_pipeline,
    load_dae,
    load_separator,
    save_dae,
    save_separator,
    train_dae,
    train_separator,
)
from .ensemble import (
    DEFAULT_BASE_KINDS,
    EnsembleConfig,
    TrainedEnsemble,
    VIEWS,
    build_view_tables,
    fit_ensemble_views,
    predict_matrix_from_tables,
    save_ensemble,
)
from .evaluate import MetricsReport, evaluate_predictions, holdout_split, loso_cv
from .features import FeatureConfig, FeatureTable
from .spectral import ChromaConfig, CqtConfig, MelConfig, MfccConfig
from .synth import ArtifactKind, BeatSpec, ClassDeltaSpec, gen_artifact, gen_beats, gen_dataset

log = logging.getLogger(__name__)


# --- presets ------------------------------------------------------------

def feature_preset(sample_rate_hz: int) -> FeatureConfig:
    """Feature configuration matched to the corpus sample rate.

    Rates of 8 kHz and above use the full-resolution analysis windows;
    lower (desk-scale synthetic) rates use shorter windows and cap the
    acoustic range below their Nyquist.
    """
    if sample_rate_hz >= 8000:
        return FeatureConfig()
    f_max = min(2000.0, 0.45 * sample_rate_hz)
    mel = MelConfig(n_mels=40, f_max_hz=f_max, window_len=512, hop=128)
    return FeatureConfig(
        mel=mel,
        mfcc=MfccConfig(n_coeffs=13, mel=dataclasses.replace(mel, log_compress=False)),
        chroma=ChromaConfig(window_len=512, hop=128),
        cqt=CqtConfig(f_max_hz=f_max, hop=256),
    )


def ensemble_preset(sample_rate_hz: int, features: FeatureConfig,
                    stacking_folds: int = 0) -> EnsembleConfig:
    """Ensemble defaults; desk-scale rates use lighter boosting budgets."""
    if sample_rate_hz >= 8000:
        params = HyperParams()
        folds = stacking_folds or 5
    else:
        params = HyperParams(gbt_rounds=40)
        folds = stacking_folds or 3
    meta = dataclasses.replace(params, gbt_rounds=min(params.gbt_rounds, 30)
                               if sample_rate_hz < 8000 else params.gbt_rounds)
    return EnsembleConfig(base_params=params, meta_params=meta,
                          stacking_folds=folds, features=features)


def gate_preset(sample_rate_hz: int) -> GateConfig:
    return GateConfig(window_len=512, hop=128)


# --- denoiser training on synthetic sources ----------------------------------

def synth_training_sources(sample_rate_hz: int, seed: int,
                           n_each: int = 6, duration_s: float = 3.0
                           ) -> tuple[list[Waveform], list[Waveform]]:
    """Clean heartbeat and artifact waveform banks for denoiser training."""
    spec = BeatSpec(fhr_bpm=140.0)
    beats = [gen_beats(spec, duration_s, sample_rate_hz, seed=seed + 900 + i)
             for i in range(n_each)]
    artifacts = [gen_artifact(ArtifactKind.HISS, duration_s, sample_rate_hz,
                              seed=seed + 950 + i) for i in range(n_each)]
    return beats, artifacts


def train_models(method: DenoiseMethod, sample_rate_hz: int, seed: int,
                 dc_cfg: DcTrainConfig | None = None,
                 dae_cfg: DaeTrainConfig | None = None) -> ModelSet:
    """Train whatever the chosen path needs, on synthetic parallel sources."""
    beats, artifacts = synth_training_sources(sample_rate_hz, seed)
    models = ModelSet(gate=gate_preset(sample_rate_hz))
    if method is DenoiseMethod.SCBSS:
        cfg = dc_cfg or DcTrainConfig(window_len=256, hop=64, epochs=15,
                                      n_mixtures=12, mixture_s=2.0,
                                      learning_rate=3e-3, seed=seed)
        models.separator = train_separator(beats, artifacts, cfg)
    elif method is DenoiseMethod.DAE:
        cfg = dae_cfg or DaeTrainConfig(window_len=256, hop=64, context=2,
                                        hidden=(128, 32, 128), epochs=60,
                                        learning_rate=2e-3, seed=seed)
        rng = np.random.default_rng(seed + 3)
        pairs = []
        for i, clean in enumerate(beats):
            noise = artifacts[i % len(artifacts)]
            scale = np.sqrt(np.mean(clean.samples**2) / max(np.mean(noise.samples**2), 1e-12))
            noisy = Waveform(clean.samples + scale * noise.samples, sample_rate_hz)
            pairs.append((noisy, clean))
        models.dae = train_dae(pairs, cfg)
    return models


def save_models(models: ModelSet, models_dir: str | Path) -> None:
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    if models.separator is not None:
        save_separator(models.separator, models_dir / "separator.bin")
    if models.dae is not None:
        save_dae(models.dae, models_dir / "dae.bin")


def load_models(models_dir: str | Path, sample_rate_hz: int = 16000) -> ModelSet:
    models_dir = Path(models_dir)
    models = ModelSet(gate=gate_preset(sample_rate_hz))
    sep_path = models_dir / "separator.bin"
    dae_path = models_dir / "dae.bin"
    if sep_path.exists():
        models.separator = load_separator(sep_path)
    if dae_path.exists():
        models.dae = load_dae(dae_path)
    return models


# --- denoising a dataset ------------------------------------------------------

def denoise_dataset(data: LabeledDataset, method: DenoiseMethod | None,
                    models: ModelSet, jobs: int = 1) -> LabeledDataset:
    """Apply the chosen denoising path to every segment."""
    if method is None:
        return data

    def one(item: LabeledItem) -> LabeledItem:
        seg = item.payload
        s_d = denoise_pipeline(seg.waveform, method, models)
        return LabeledItem(
            Segment(s_d, seg.subject_id, seg.gender, seg.start_s, seg.end_s),
            item.gender, item.subject_id,
        )

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            items = list(pool.map(one, data.items))
    else:
        items = [one(item) for item in data.items]
    return LabeledDataset(items)


# --- feature caching ------------------------------------------------------

def _views_cache_key(data: LabeledDataset, fcfg: FeatureConfig) -> str:
    digest = hashlib.sha256()
    for item in data:
        seg = item.payload
        digest.update(item.subject_id.encode())
        digest.update(item.gender.value.encode())
        digest.update(np.int64(seg.waveform.sample_rate_hz).tobytes())
        digest.update(seg.waveform.samples.tobytes())
    digest.update(json.dumps(_feature_cfg_fingerprint(fcfg), sort_keys=True).encode())
    return digest.hexdigest()[:24]


def _feature_cfg_fingerprint(cfg: FeatureConfig) -> dict:
    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {k: plain(v) for k, v in vars(obj).items()}
        return obj

    return plain(cfg)


def cached_view_tables(data: LabeledDataset, fcfg: FeatureConfig,
                       cache_dir: str | Path | None, jobs: int = 1
                       ) -> dict[str, FeatureTable]:
    """Build (or reload) the five view tables, caching by content hash."""
    if cache_dir is None:
        return build_view_tables(data, fcfg, jobs=jobs)
    cache_dir = Path(cache_dir)
    key = _views_cache_key(data, fcfg)
    slot = cache_dir / f"views-{key}"
    if slot.exists():
        try:
            return {v: FeatureTable.load(slot / f"{v}.bin") for v in VIEWS}
        except Exception:
            pass  # fall through and rebuild a corrupt cache entry
    tables = build_view_tables(data, fcfg, jobs=jobs)
    slot.mkdir(parents=True, exist_ok=True)
    for v, table in tables.items():
        table.save(slot / f"{v}.bin")
    return tables


def subset_tables(tables: dict[str, FeatureTable], rows: list[int]) -> dict[str, FeatureTable]:
    return {
        v: FeatureTable(
            t.X[rows], t.schema,
            [t.subject_ids[r] for r in rows],
            [t.genders[r] for r in rows],
        )
        for v, t in tables.items()
    }


# --- protocol execution over view tables ---------------------------------------

def _probs_to_labels(probs: np.ndarray) -> list[Gender]:
    return [Gender.MALE if pm >= pf else Gender.FEMALE for pm, pf in probs]


def holdout_on_views(data: LabeledDataset, tables: dict[str, FeatureTable],
                     ecfg: EnsembleConfig, test_fraction: float, seed: int
                     ) -> tuple[MetricsReport, TrainedEnsemble]:
    """Grouped hold-out: fit on the train subjects, score the test subjects."""
    train_ds, test_ds = holdout_split(data, test_fraction, seed)
    train_subjects = set(train_ds.subjects())
    rows_train = [i for i, it in enumerate(data.items) if it.subject_id in train_subjects]
    rows_test = [i for i, it in enumerate(data.items) if it.subject_id not in train_subjects]
    ens = fit_ensemble_views(subset_tables(tables, rows_train), ecfg, seed)
    test_tables = subset_tables(tables, rows_test)
    probs = predict_matrix_from_tables(ens, test_tables)
    preds = _probs_to_labels(probs)
    truth = [data.items[r].gender for r in rows_test]
    sids = [data.items[r].subject_id for r in rows_test]
    report = evaluate_predictions(truth, preds, "holdout", subject_ids=sids)
    return report, ens


def loso_on_views(data: LabeledDataset, tables: dict[str, FeatureTable],
                  ecfg: EnsembleConfig, seed: int) -> MetricsReport:
    """Leave-one-subject-out over precomputed view tables."""
    row_of = {id(item): i for i, item in enumerate(data.items)}

    def train_fn(train_ds: LabeledDataset) -> TrainedEnsemble:
        rows = [row_of[id(it)] for it in train_ds]
        return fit_ensemble_views(subset_tables(tables, rows), ecfg, seed)

    def predict_fn(model: TrainedEnsemble, items: list[LabeledItem]) -> list[Gender]:
        rows = [row_of[id(it)] for it in items]
        probs = predict_matrix_from_tables(model, subset_tables(tables, rows))
        return _probs_to_labels(probs)

    return loso_cv(data, train_fn, predict_fn)


def single_view_holdout(data: LabeledDataset, tables: dict[str, FeatureTable],
                        view: str, kind: ModelKind, params: HyperParams,
                        test_fraction: float, seed: int) -> MetricsReport:
    train_ds, _ = holdout_split(data, test_fraction, seed)
    train_subjects = set(train_ds.subjects())
    rows_train = [i for i, it in enumerate(data.items) if it.subject_id in train_subjects]
    rows_test = [i for i, it in enumerate(data.items) if it.subject_id not in train_subjects]
    table = tables[view]
    model = fit(kind, table.X[rows_train], table.labels()[rows_train], params,
                seed=seed, schema=table.schema)
    probs = predict_proba_matrix(model, table.X[rows_test])
    preds = _probs_to_labels(probs)
    truth = [data.items[r].gender for r in rows_test]
    sids = [data.items[r].subject_id for r in rows_test]
    return evaluate_predictions(truth, preds, "holdout", subject_ids=sids)


def single_view_loso(data: LabeledDataset, tables: dict[str, FeatureTable],
                     view: str, kind: ModelKind, params: HyperParams,
                     seed: int) -> MetricsReport:
    row_of = {id(item): i for i, item in enumerate(data.items)}
    table = tables[view]

    def train_fn(train_ds: LabeledDataset):
        rows = [row_of[id(it)] for it in train_ds]
        return fit(kind, table.X[rows], table.labels()[rows], params,
                   seed=seed, schema=table.schema)

    def predict_fn(model, items):
        rows = [row_of[id(it)] for it in items]
        return _probs_to_labels(predict_proba_matrix(model, table.X[rows]))

    return loso_cv(data, train_fn, predict_fn)


def evaluate_grid(data: LabeledDataset, models_by_method: dict[DenoiseMethod, ModelSet],
                  fcfg: FeatureConfig, ecfg: EnsembleConfig, seed: int,
                  test_fraction: float = 0.2, protocols: tuple[str, ...] = ("holdout", "loso"),
                  cache_dir: str | Path | None = None, jobs: int = 1) -> list[dict]:
    """Per-denoiser, per-view metric rows plus the ensemble rows.

    Mirrors the shape of the per-classifier results table: every denoising
    method is paired with each single-view classifier and with the full
    stack, each scored under the requested protocols.
    """
    rows: list[dict] = []
    for method, models in models_by_method.items():
        den = denoise_dataset(data, method, models, jobs=jobs)
        tables = cached_view_tables(den, fcfg, cache_dir, jobs=jobs)
        for view in VIEWS:
            kind = DEFAULT_BASE_KINDS[view]
            entry = {"denoise": method.value, "input": view, "classifier": kind.value}
            if "holdout" in protocols:
                rep = single_view_holdout(den, tables, view, kind, ecfg.base_params,
                                          test_fraction, seed)
                entry["holdout"] = rep.to_dict()["metrics"]
            if "loso" in protocols:
                rep = single_view_loso(den, tables, view, kind, ecfg.base_params, seed)
                entry["loso"] = rep.to_dict()["metrics"]
            rows.append(entry)
        entry = {"denoise": method.value, "input": "ensemble", "classifier": "stack+gbt"}
        if "holdout" in protocols:
            rep, _ = holdout_on_views(den, tables, ecfg, test_fraction, seed)
            entry["holdout"] = rep.to_dict()["metrics"]
        if "loso" in protocols:
            rep = loso_on_views(den, tables, ecfg, seed)
            entry["loso"] = rep.to_dict()["metrics"]
        rows.append(entry)
    return rows


# --- run configuration ------------------------------------------------------

class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    """Declarative experiment description (JSON file contract).

    Top-level keys: ``seed`` (required), ``out_dir``, ``data``, ``denoise``,
    ``features``, ``ensemble``, ``evaluation``, ``save_denoised``. ``data``
    holds either ``{"synth": {...gen_dataset parameters...}}`` or
    ``{"manifest": "path.csv", "resample_hz": int | null,
    "max_segment_s": float, "balanced_per_class": int | null}``.
    """

    seed: int
    out_dir: str
    data: dict
    denoise: dict = field(default_factory=lambda: {"method": "scbss"})
    features: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=lambda: {"protocol": "holdout",
                                                      "test_fraction": 0.2})
    save_denoised: bool = False
    jobs: int = 1

    KNOWN_KEYS = {"seed", "out_dir", "data", "denoise", "features", "ensemble",
                  "evaluation", "save_denoised", "jobs"}

    @classmethod
    def from_dict(cls, raw: dict, config_dir: Path | None = None) -> "RunConfig":
        unknown = set(raw) - cls.KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in raw:
            raise ConfigError("config must set a seed")
        if "data" not in raw:
            raise ConfigError("config must set data (synth or manifest)")
        data = dict(raw["data"])
        if ("synth" in data) == ("manifest" in data):
            raise ConfigError("data must contain exactly one of 'synth' or 'manifest'")
        if "manifest" in data and config_dir is not None:
            mpath = Path(data["manifest"])
            if not mpath.is_absolute():
                data["manifest"] = str(config_dir / mpath)
        return cls(
            seed=int(raw["seed"]),
            out_dir=str(raw.get("out_dir", "fpcg-run")),
            data=data,
            denoise=dict(raw.get("denoise", {"method": "scbss"})),
            features=dict(raw.get("features", {})),
            ensemble=dict(raw.get("ensemble", {})),
            evaluation=dict(raw.get("evaluation", {"protocol": "holdout",
                                                   "test_fraction": 0.2})),
            save_denoised=bool(raw.get("save_denoised", False)),
            jobs=int(raw.get("jobs", 1)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(str(path))
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw, config_dir=path.parent)


def load_segments(cfg: RunConfig) -> LabeledDataset:
    """Materialize the run's segment dataset from synth parameters or a manifest."""
    data = cfg.data
    if "synth" in data:
        params = dict(data["synth"])
        n_subjects = int(params.pop("subjects_per_class", 10))
        n_segments = int(params.pop("segments_per_subject", 5))
        delta = ClassDeltaSpec(
            fhr_delta_bpm=float(params.pop("fhr_delta_bpm", 20.0)),
            s1_freq_delta_hz=float(params.pop("s1_freq_delta_hz", 0.0)),
            subject_fhr_sd_bpm=float(params.pop("subject_fhr_sd_bpm", 2.0)),
            noise_snr_db=params.pop("noise_snr_db", 15.0),
            segment_s=float(params.pop("segment_s", 7.0)),
            sample_rate=int(params.pop("sample_rate", 4000)),
        )
        if params:
            raise ConfigError(f"unknown synth keys: {sorted(params)}")
        return gen_dataset(n_subjects, n_segments, delta, seed=cfg.seed)

    manifest = load_manifest(data["manifest"])
    resample_hz = data.get("resample_hz")
    max_segment_s = float(data.get("max_segment_s", 7.0))
    segments: list[Segment] = []
    for item in manifest:
        record = item.payload
        w = load_wav(record.file_path)
        if resample_hz:
            w = resample(w, int(resample_hz))
        segments.extend(segment_recording(w, record, max_segment_s))
    ds = LabeledDataset.from_segments(segments)
    per_class = data.get("balanced_per_class")
    if per_class:
        ds = balanced_sample(ds, int(per_class), seed=cfg.seed)
    return ds


def _segment_rate(data: LabeledDataset) -> int:
    return data.items[0].payload.waveform.sample_rate_hz


def run_experiment(cfg: RunConfig) -> dict:
    """Execute a full run; returns a summary dict of reports and artifacts."""
    from .report import (
        render_report_figures,
        write_predictions_csv,
        write_report_json,
    )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    segments = load_segments(cfg)
    rate = _segment_rate(segments)
    log.info("loaded %d segments at %d Hz", len(segments), rate)

    method_name = cfg.denoise.get("method", "scbss")
    if method_name not in ("scbss", "dae", "none"):
        raise ConfigError(f"unknown denoise method {method_name!r}; "
                          f"valid: scbss, dae, none")
    method = None if method_name == "none" else DenoiseMethod(method_name)

    models = ModelSet(gate=gate_preset(rate))
    if method is not None:
        models_dir = cfg.denoise.get("models_dir")
        if models_dir:
            models = load_models(models_dir, rate)
            log.info("loaded denoising models from %s", models_dir)
        else:
            log.info("training %s denoising models on synthetic sources", method_name)
            models = train_models(method, rate, cfg.seed)
            save_models(models, out_dir / "models")

    denoised = denoise_dataset(segments, method, models, jobs=cfg.jobs)
    log.info("denoised %d segments via %s", len(denoised), method_name)
    if cfg.save_denoised:
        den_dir = out_dir / "denoised"
        for i, item in enumerate(denoised):
            save_wav(item.payload.waveform, den_dir / f"seg{i:05d}_{item.subject_id}.wav")

    fcfg = feature_preset(rate)
    ecfg = ensemble_preset(rate, fcfg, int(cfg.ensemble.get("stacking_folds", 0)))
    tables = cached_view_tables(denoised, fcfg, out_dir / "cache", jobs=cfg.jobs)
    for view, table in tables.items():
        table.to_csv(out_dir / "features" / f"{view}.csv")

    protocol = cfg.evaluation.get("protocol", "holdout")
    test_fraction = float(cfg.evaluation.get("test_fraction", 0.2))
    reports: dict[str, MetricsReport] = {}
    if protocol in ("holdout", "both"):
        log.info("running grouped hold-out at fraction %.2f", test_fraction)
        report, ens = holdout_on_views(denoised, tables, ecfg, test_fraction, cfg.seed)
        reports["holdout"] = report
        save_ensemble(ens, out_dir / "ensemble.bin")
    if protocol in ("loso", "both"):
        log.info("running leave-one-subject-out over %d subjects",
                 len(denoised.subjects()))
        reports["loso"] = loso_on_views(denoised, tables, ecfg, cfg.seed)
    if not reports:
        raise ConfigError(f"unknown evaluation protocol {protocol!r}; "
                          f"valid: holdout, loso, both")
    if "holdout" not in reports:
        ens = fit_ensemble_views(tables, ecfg, cfg.seed)
        save_ensemble(ens, out_dir / "ensemble.bin")

    combined = {
        "schema_version": 1,
        "seed": cfg.seed,
        "n_segments": len(segments),
        "sample_rate_hz": rate,
        "denoise_method": method_name,
        "reports": {name: rep.to_dict() for name, rep in reports.items()},
    }
    write_report_json(combined, out_dir / "report.json")
    figures: list[str] = []
    for name, rep in reports.items():
        write_predictions_csv(rep, out_dir / f"predictions_{name}.csv")
        figures.extend(render_report_figures(rep, out_dir / "figures" / name))
    return {
        "report": combined,
        "report_path": str(out_dir / "report.json"),
        "figures": figures,
        "ensemble_path": str(out_dir / "ensemble.bin"),
    }
