"""Heterogeneous stacking: five feature views, five base learners, and a
boosted-tree meta-learner trained on out-of-fold base probabilities.

The meta-learner never sees in-fold predictions: subjects are dealt into
stacking folds, each fold's rows are predicted by bases trained on the
complement, and only those probabilities train the meta model. Bases are
then refit on all rows for deployment. The fold bookkeeping is kept on the
trained ensemble so protocol-integrity checks can audit it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform
from .classifiers import (
    ClassProbabilities,
    HyperParams,
    ModelKind,
    TrainedModel,
    fit,
    model_from_payload,
    model_to_payload,
    predict_proba_matrix,
)
from .container import load_container, save_container
from .dataset import Gender, LabeledDataset
from .errors import InsufficientSubjectsError, SchemaMismatchError
from .features import (
    AcousticMatrices,
    FeatureConfig,
    FeatureTable,
    FeatureVector,
    flatten_acoustic,
    full_statistical_vector,
)

VIEWS = ("statistical", "chroma", "mel", "mfcc", "cqt")

DEFAULT_BASE_KINDS = {
    "statistical": ModelKind.GBT,
    "chroma": ModelKind.LDA,
    "mel": ModelKind.GBT,
    "mfcc": ModelKind.SVM,
    "cqt": ModelKind.KNN,
}


@dataclass(frozen=True)
class EnsembleConfig:
    base_kinds: dict = field(default_factory=lambda: dict(DEFAULT_BASE_KINDS))
    base_params: HyperParams = HyperParams()
    meta_params: HyperParams = HyperParams()
    stacking_folds: int = 5
    features: FeatureConfig = FeatureConfig()

    def validate(self) -> None:
        if tuple(sorted(self.base_kinds)) != tuple(sorted(VIEWS)):
            raise ValueError(f"base_kinds must cover exactly the views {VIEWS}")
        if self.stacking_folds < 2:
            raise ValueError("stacking_folds must be >= 2")


def build_views(s_d: Waveform, cfg: FeatureConfig = FeatureConfig()) -> dict[str, FeatureVector]:
    """The five per-segment feature views, keyed by view name."""
    acoustic = AcousticMatrices.compute(s_d, cfg)
    return {
        "statistical": full_statistical_vector(s_d, cfg),
        "chroma": flatten_acoustic(acoustic.chroma, prefix="chroma"),
        "mel": flatten_acoustic(acoustic.mel, prefix="mel"),
        "mfcc": flatten_acoustic(acoustic.mfcc, prefix="mfcc"),
        "cqt": flatten_acoustic(acoustic.cqt, prefix="cqt"),
    }


def build_view_tables(data: LabeledDataset, cfg: FeatureConfig = FeatureConfig(),
                      jobs: int = 1) -> dict[str, FeatureTable]:
    """Featurize a dataset of denoised segments into one table per view."""
    waveforms = []
    sids, genders = [], []
    for item in data:
        seg = item.payload
        waveforms.append(seg.waveform if hasattr(seg, "waveform") else seg)
        sids.append(item.subject_id)
        genders.append(item.gender)

    def one(w: Waveform) -> dict[str, FeatureVector]:
        return build_views(w, cfg)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            all_views = list(pool.map(one, waveforms))
    else:
        all_views = [one(w) for w in waveforms]

    tables: dict[str, FeatureTable] = {}
    for view in VIEWS:
        schema = all_views[0][view].schema
        x = np.stack([v[view].values for v in all_views])
        tables[view] = FeatureTable(x, schema, list(sids), list(genders))
    return tables


@dataclass
class StackingFold:
    """Audit record: which subjects trained the bases that predicted which rows."""

    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    test_rows: tuple[int, ...]


@dataclass
class TrainedEnsemble:
    base_models: dict[str, TrainedModel]
    meta_model: TrainedModel
    config: EnsembleConfig
    stacking_folds: list[StackingFold]
    seed: int

    def meta_input_dim(self) -> int:
        return 2 * len(VIEWS)


def _meta_schema() -> tuple[str, ...]:
    names = []
    for view in VIEWS:
        names.extend((f"meta.{view}.p_male", f"meta.{view}.p_female"))
    return tuple(names)


def _group_folds(subjects: list[str], subject_gender: dict[str, Gender],
                 n_folds: int, rng: np.random.Generator) -> list[list[str]]:
    """Deal subjects into folds, stratified by gender."""
    folds: list[list[str]] = [[] for _ in range(n_folds)]
    slot = 0
    for gender in (Gender.MALE, Gender.FEMALE):
        group = [s for s in subjects if subject_gender[s] is gender]
        order = rng.permutation(len(group))
        for i in order:
            folds[slot % n_folds].append(group[int(i)])
            slot += 1
    return [f for f in folds if f]


def fit_ensemble_views(tables: dict[str, FeatureTable], cfg: EnsembleConfig,
                       seed: int) -> TrainedEnsemble:
    """Fit the stack from precomputed view tables (rows aligned across views)."""
    cfg.validate()
    ref = tables[VIEWS[0]]
    n = len(ref)
    y = ref.labels()
    subjects = list(dict.fromkeys(ref.subject_ids))
    subject_gender: dict[str, Gender] = {}
    for sid, g in zip(ref.subject_ids, ref.genders):
        subject_gender.setdefault(sid, g)
    per_class = {Gender.MALE: 0, Gender.FEMALE: 0}
    for g in subject_gender.values():
        per_class[g] += 1
    if min(per_class.values()) < 2:
        raise InsufficientSubjectsError(
            f"need >= 2 subjects per class, have {per_class}"
        )

    rng = np.random.default_rng(seed)
    n_folds = min(cfg.stacking_folds, len(subjects))
    fold_subjects = _group_folds(subjects, subject_gender, n_folds, rng)

    row_subject = np.array(ref.subject_ids)
    oof = np.zeros((n, 2 * len(VIEWS)))
    seen = np.zeros(n, dtype=bool)
    folds: list[StackingFold] = []
    for fold in fold_subjects:
        test_mask = np.isin(row_subject, fold)
        train_mask = ~test_mask
        train_y = y[train_mask]
        if len(set(train_y)) < 2:
            raise InsufficientSubjectsError(
                "a stacking fold left single-class training data; reduce folds"
            )
        for vi, view in enumerate(VIEWS):
            table = tables[view]
            base = fit(cfg.base_kinds[view], table.X[train_mask], train_y,
                       cfg.base_params, seed=seed + 17 * vi, schema=table.schema)
            oof[test_mask, 2 * vi: 2 * vi + 2] = predict_proba_matrix(
                base, table.X[test_mask]
            )
        seen |= test_mask
        folds.append(StackingFold(
            train_subjects=tuple(sorted(set(row_subject[train_mask]))),
            test_subjects=tuple(sorted(fold)),
            test_rows=tuple(int(i) for i in np.flatnonzero(test_mask)),
        ))
    if not seen.all():
        raise AssertionError("stacking folds failed to cover every row")

    meta = fit(ModelKind.GBT, oof, y, cfg.meta_params, seed=seed + 1009,
               schema=_meta_schema())
    base_models = {
        view: fit(cfg.base_kinds[view], tables[view].X, y, cfg.base_params,
                  seed=seed + 17 * vi, schema=tables[view].schema)
        for vi, view in enumerate(VIEWS)
    }
    return TrainedEnsemble(base_models, meta, cfg, folds, seed)


def fit_ensemble(data: LabeledDataset, cfg: EnsembleConfig = EnsembleConfig(),
                 seed: int = 0) -> TrainedEnsemble:
    """Featurize denoised segments and fit the full stack."""
    tables = build_view_tables(data, cfg.features)
    return fit_ensemble_views(tables, cfg, seed)


def meta_inputs_from_views(e: TrainedEnsemble, views: dict[str, FeatureVector]) -> np.ndarray:
    parts = []
    for view in VIEWS:
        fv = views[view]
        model = e.base_models[view]
        if model.feature_schema is not None and tuple(fv.schema) != tuple(model.feature_schema):
            raise SchemaMismatchError(f"view {view!r} schema differs from fit time")
        parts.append(predict_proba_matrix(model, fv.values[None, :])[0])
    return np.concatenate(parts)


def predict_from_views(e: TrainedEnsemble, views: dict[str, FeatureVector]) -> tuple[Gender, ClassProbabilities]:
    z = meta_inputs_from_views(e, views)
    probs = ClassProbabilities(predict_proba_matrix(e.meta_model, z[None, :])[0])
    label = Gender.MALE if probs.p_male >= probs.p_female else Gender.FEMALE
    return label, probs


def predict_ensemble(e: TrainedEnsemble, s_d: Waveform) -> tuple[Gender, ClassProbabilities]:
    """Views, base probabilities, and meta decision for one denoised segment."""
    return predict_from_views(e, build_views(s_d, e.config.features))


def predict_matrix_from_tables(e: TrainedEnsemble, tables: dict[str, FeatureTable]) -> np.ndarray:
    """Batch ensemble probabilities for precomputed, row-aligned view tables."""
    parts = []
    for view in VIEWS:
        table = tables[view]
        model = e.base_models[view]
        if model.feature_schema is not None and tuple(table.schema) != tuple(model.feature_schema):
            raise SchemaMismatchError(f"view {view!r} schema differs from fit time")
        parts.append(predict_proba_matrix(model, table.X))
    z = np.concatenate(parts, axis=1)
    return predict_proba_matrix(e.meta_model, z)


# --- persistence ------------------------------------------------------------

def save_ensemble(e: TrainedEnsemble, path) -> None:
    meta = {
        "seed": e.seed,
        "stacking_folds": [
            {"train": list(f.train_subjects), "test": list(f.test_subjects),
             "rows": list(f.test_rows)}
            for f in e.stacking_folds
        ],
        "config": {
            "base_kinds": {v: k.value for v, k in e.config.base_kinds.items()},
            "stacking_folds": e.config.stacking_folds,
            "features": _feature_config_dict(e.config.features),
        },
        "models": {},
    }
    arrays: dict[str, np.ndarray] = {}
    for name, model in [*e.base_models.items(), ("meta", e.meta_model)]:
        m_meta, m_arrays = model_to_payload(model)
        meta["models"][name] = m_meta
        for key, arr in m_arrays.items():
            arrays[f"{name}.{key}"] = arr
    save_container(path, kind="ensemble", meta=meta, arrays=arrays)


def load_ensemble(path) -> TrainedEnsemble:
    _, meta, arrays = load_container(path, expect_kind="ensemble")
    models: dict[str, TrainedModel] = {}
    for name, m_meta in meta["models"].items():
        prefix = f"{name}."
        m_arrays = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        models[name] = model_from_payload(m_meta, m_arrays)
    cfg_meta = meta["config"]
    cfg = EnsembleConfig(
        base_kinds={v: ModelKind(k) for v, k in cfg_meta["base_kinds"].items()},
        stacking_folds=cfg_meta["stacking_folds"],
        features=_feature_config_from_dict(cfg_meta["features"]),
    )
    folds = [
        StackingFold(tuple(f["train"]), tuple(f["test"]), tuple(f["rows"]))
        for f in meta["stacking_folds"]
    ]
    meta_model = models.pop("meta")
    return TrainedEnsemble(models, meta_model, cfg, folds, meta["seed"])


def _feature_config_dict(cfg: FeatureConfig) -> dict:
    return {
        "mel": vars(cfg.mel),
        "mfcc": {"n_coeffs": cfg.mfcc.n_coeffs, "log_floor": cfg.mfcc.log_floor,
                 "mel": vars(cfg.mfcc.mel)},
        "chroma": vars(cfg.chroma),
        "cqt": vars(cfg.cqt),
        "wavelet": cfg.wavelet,
        "dwt_levels": cfg.dwt_levels,
        "n_bands": cfg.n_bands,
        "band_width_hz": cfg.band_width_hz,
        "include_zcr": cfg.include_zcr,
        "zcr_frame_len": cfg.zcr_frame_len,
    }


def _feature_config_from_dict(d: dict) -> FeatureConfig:
    from .spectral import ChromaConfig, CqtConfig, MelConfig, MfccConfig

    return FeatureConfig(
        mel=MelConfig(**d["mel"]),
        mfcc=MfccConfig(n_coeffs=d["mfcc"]["n_coeffs"], log_floor=d["mfcc"]["log_floor"],
                        mel=MelConfig(**d["mfcc"]["mel"])),
        chroma=ChromaConfig(**d["chroma"]),
        cqt=CqtConfig(**d["cqt"]),
        wavelet=d["wavelet"],
        dwt_levels=d["dwt_levels"],
        n_bands=d["n_bands"],
        band_width_hz=d["band_width_hz"],
        include_zcr=d["include_zcr"],
        zcr_frame_len=d["zcr_frame_len"],
    )
