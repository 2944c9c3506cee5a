"""Acoustic screening pipeline: WAV ingest, spectral features, random forest,
subject-grouped cross-validation, and ROC/confusion reporting."""

from .audio import AudioClip, Manifest, ManifestEntry, RawAudio, decode_wav, load_clip, load_manifest, resample_mono
from .cv import CvRunConfig, EvalReport, FoldAssignment, SubjectGroupedKFold, assign_folds, run_cross_validation
from .dsp import FrameParams, MelSpectrogramDb, PowerSpectrogram
from .errors import DataError, FeatureTableError, FoldError, ManifestError, ModelFormatError, WavFormatError
from .features import (
    AcousticFeatureExtractor,
    FeatureConfig,
    FeatureTable,
    FeatureVector,
    extract_features,
    feature_names,
    read_feature_csv,
    write_feature_csv,
)
from .forest import (
    DecisionTree,
    ForestModel,
    ForestParams,
    RandomForest,
    load_model,
    predict_proba,
    save_model,
    train_forest,
)
from .metrics import ConfusionMatrix, RocCurve, aggregate_folds, confusion_and_scores, roc_auc

__version__ = "0.1.0"

__all__ = [
    "AcousticFeatureExtractor",
    "AudioClip",
    "ConfusionMatrix",
    "CvRunConfig",
    "DataError",
    "DecisionTree",
    "EvalReport",
    "FeatureConfig",
    "FeatureTable",
    "FeatureTableError",
    "FeatureVector",
    "FoldAssignment",
    "FoldError",
    "ForestModel",
    "ForestParams",
    "FrameParams",
    "Manifest",
    "ManifestEntry",
    "ManifestError",
    "MelSpectrogramDb",
    "ModelFormatError",
    "PowerSpectrogram",
    "RandomForest",
    "RawAudio",
    "RocCurve",
    "SubjectGroupedKFold",
    "WavFormatError",
    "aggregate_folds",
    "assign_folds",
    "confusion_and_scores",
    "decode_wav",
    "extract_features",
    "feature_names",
    "load_clip",
    "load_manifest",
    "load_model",
    "predict_proba",
    "read_feature_csv",
    "resample_mono",
    "roc_auc",
    "run_cross_validation",
    "save_model",
    "train_forest",
    "write_feature_csv",
]
