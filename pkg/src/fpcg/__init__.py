"""fpcg: fetal phonocardiogram analysis toolkit.

Segmentation and ingestion of heart-sound recordings, adaptive denoising
(spectral gating, a denoising autoencoder, deep-clustering source
separation with band-stop fusion), three-domain feature extraction, five
native base classifiers stacked under a boosted-tree meta-learner, and
subject-grouped evaluation protocols. Synthetic generators make the whole
pipeline verifiable without clinical data.
"""

__version__ = "0.1.0"

from .audio_io import Waveform, load_wav, resample, save_wav
from .dataset import (
    Gender,
    LabeledDataset,
    Segment,
    SubjectRecord,
    balanced_sample,
    load_manifest,
    segment_recording,
)
from .denoise import DenoiseMethod, ModelSet, denoise_pipeline
from .ensemble import EnsembleConfig, fit_ensemble, predict_ensemble
from .evaluate import ConfusionMatrix, MetricsReport, compute_metrics, holdout_split, loso_cv
from .features import FeatureConfig, FeatureVector, full_statistical_vector
from .synth import BeatSpec, ClassDeltaSpec, gen_beats, gen_dataset

__all__ = [
    "Waveform", "load_wav", "save_wav", "resample",
    "Gender", "LabeledDataset", "Segment", "SubjectRecord",
    "load_manifest", "segment_recording", "balanced_sample",
    "DenoiseMethod", "ModelSet", "denoise_pipeline",
    "EnsembleConfig", "fit_ensemble", "predict_ensemble",
    "ConfusionMatrix", "MetricsReport", "compute_metrics",
    "holdout_split", "loso_cv",
    "FeatureConfig", "FeatureVector", "full_statistical_vector",
    "BeatSpec", "ClassDeltaSpec", "gen_beats", "gen_dataset",
    "__version__",
]
