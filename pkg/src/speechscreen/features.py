"""Per-clip acoustic feature vectors and the feature-table CSV format.

The descriptor is 37-dimensional by default: 20 MFCCs, 12 chroma bins, then
rms, spectral_centroid, spectral_bandwidth, spectral_rolloff, zcr. Each
per-frame stream is reduced by its arithmetic mean over frames.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import AudioClip
from .dsp import FrameParams, chroma, frame_stats, mel_from_power, mfcc, spectral_descriptors, stft_power
from .errors import FeatureTableError, DataError
from .validation import LABELS

SCHEMA_VERSION = 1

SCALAR_NAMES = ("rms", "spectral_centroid", "spectral_bandwidth", "spectral_rolloff", "zcr")
ID_COLUMNS = ("clip_id", "subject_id", "label")


def feature_names(n_mfcc: int = 20) -> list[str]:
    """Fixed column order of the feature schema."""
    names = [f"mfcc_{i:02d}" for i in range(n_mfcc)]
    names += [f"chroma_{i:02d}" for i in range(12)]
    names += list(SCALAR_NAMES)
    return names


@dataclass
class FeatureConfig:
    n_mfcc: int = 20
    n_mels: int = 128
    frame: FrameParams = field(default_factory=FrameParams)
    fmin: float = 0.0
    fmax: float | None = None  # None means Nyquist
    ref_mode: str = "max"
    floor_db: float = -80.0
    rolloff_pct: float = 0.85
    aggregation: str = "mean"

    def __post_init__(self):
        if self.n_mfcc < 1 or self.n_mfcc > self.n_mels:
            raise ValueError(f"need 1 <= n_mfcc <= n_mels, got n_mfcc={self.n_mfcc}, n_mels={self.n_mels}")
        if self.aggregation != "mean":
            raise ValueError(f"unsupported aggregation {self.aggregation!r}")

    @property
    def dimension(self) -> int:
        return self.n_mfcc + 12 + len(SCALAR_NAMES)

    def names(self) -> list[str]:
        return feature_names(self.n_mfcc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FeatureVector:
    clip_id: str
    subject_id: str
    label: str | None
    values: np.ndarray
    schema_version: int = SCHEMA_VERSION


class ClipTooShortError(DataError):
    """Clip has fewer samples than one analysis frame."""


def extract_features(clip: AudioClip, config: FeatureConfig | None = None) -> FeatureVector:
    """Compute the fixed-order descriptor for one clip.

    Pure function of (samples, sample_rate, config); a clip shorter than
    one analysis frame is rejected rather than padded, and any non-finite
    intermediate raises (that would be a DSP bug, not a data problem).
    """
    config = config if config is not None else FeatureConfig()
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.size < config.frame.n_fft:
        raise ClipTooShortError(
            f"clip {clip.clip_id!r}: {samples.size} samples is shorter than one "
            f"analysis frame ({config.frame.n_fft})"
        )

    power = stft_power(samples, clip.sample_rate, config.frame)
    mel_db = mel_from_power(
        power,
        n_mels=config.n_mels,
        fmin=config.fmin,
        fmax=config.fmax,
        ref_mode=config.ref_mode,
        floor_db=config.floor_db,
    )
    cepstra = mfcc(mel_db, config.n_mfcc).mean(axis=1)
    pitch_classes = chroma(power).mean(axis=1)
    desc = spectral_descriptors(power, config.rolloff_pct)
    stats = frame_stats(samples, config.frame)

    values = np.concatenate(
        [
            cepstra,
            pitch_classes,
            [
                stats.rms.mean(),
                desc.centroid.mean(),
                desc.bandwidth.mean(),
                desc.rolloff.mean(),
                stats.zcr.mean(),
            ],
        ]
    )
    if not np.all(np.isfinite(values)):
        bad = config.names()[int(np.nonzero(~np.isfinite(values))[0][0])]
        raise RuntimeError(f"non-finite feature {bad!r} for clip {clip.clip_id!r}")
    return FeatureVector(
        clip_id=clip.clip_id,
        subject_id=clip.subject_id,
        label=clip.label,
        values=values,
    )


@dataclass
class FeatureTable:
    """Ordered feature vectors plus the verbatim '#' header comments."""

    vectors: list[FeatureVector]
    names: list[str]
    comments: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        if not self.vectors:
            return np.zeros((0, len(self.names)))
        return np.vstack([v.values for v in self.vectors])

    def by_clip(self) -> dict[str, FeatureVector]:
        return {v.clip_id: v for v in self.vectors}


def write_feature_csv(table: FeatureTable) -> str:
    """Serialize to CSV; float values use their shortest round-trip form."""
    out = io.StringIO()
    for line in table.comments:
        out.write(line + "\n")
    out.write(",".join(ID_COLUMNS + tuple(table.names)) + "\n")
    for v in table.vectors:
        if v.values.size != len(table.names):
            raise FeatureTableError(
                f"clip {v.clip_id!r}: {v.values.size} values for {len(table.names)} columns"
            )
        if not np.all(np.isfinite(v.values)):
            raise FeatureTableError(f"clip {v.clip_id!r}: refusing to persist non-finite values")
        cells = [v.clip_id, v.subject_id, v.label if v.label is not None else ""]
        cells += [repr(float(x)) for x in v.values]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def read_feature_csv(text: str) -> FeatureTable:
    comments = []
    body = []
    for ln in text.splitlines():
        if ln.lstrip().startswith("#"):
            comments.append(ln)
        elif ln.strip():
            body.append(ln)
    if not body:
        raise FeatureTableError("feature CSV has no header row")

    rows = list(csv.reader(io.StringIO("\n".join(body))))
    header = [c.strip() for c in rows[0]]
    if tuple(header[:3]) != ID_COLUMNS:
        raise FeatureTableError(
            f"feature CSV must start with columns {','.join(ID_COLUMNS)}, got {','.join(header[:3])!r}"
        )
    names = header[3:]
    if not names:
        raise FeatureTableError("feature CSV has no feature columns")

    vectors = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FeatureTableError(
                f"feature CSV line {lineno}: ragged row ({len(row)} fields, expected {len(header)})"
            )
        clip_id, subject_id, label_cell = row[0], row[1], row[2].strip()
        label = label_cell if label_cell else None
        if label is not None and label not in LABELS:
            raise FeatureTableError(f"feature CSV line {lineno}: unknown label {label!r}")
        try:
            values = np.array([float(c) for c in row[3:]], dtype=np.float64)
        except ValueError:
            raise FeatureTableError(f"feature CSV line {lineno}: non-numeric value") from None
        if not np.all(np.isfinite(values)):
            raise FeatureTableError(f"feature CSV line {lineno}: non-finite value")
        vectors.append(FeatureVector(clip_id, subject_id, label, values))
    return FeatureTable(vectors=vectors, names=names, comments=comments)


def check_table_schema(table: FeatureTable, config: FeatureConfig) -> None:
    """Reject a table whose columns do not match the declared config."""
    expected = config.names()
    if table.names != expected:
        raise FeatureTableError(
            f"feature table schema mismatch: table has {len(table.names)} columns "
            f"starting {table.names[:2]}, config expects {len(expected)}"
        )


class AcousticFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: list of AudioClip -> (n_clips, 37) matrix.

    sklearn-compatible so the extraction step drops into Pipelines; fit is
    a no-op.
    """

    def __init__(
        self,
        n_mfcc=20,
        n_mels=128,
        n_fft=2048,
        hop=512,
        window="hann",
        center=True,
        fmin=0.0,
        fmax=None,
        ref_mode="max",
        floor_db=-80.0,
        rolloff_pct=0.85,
    ):
        self.n_mfcc = n_mfcc
        self.n_mels = n_mels
        self.n_fft = n_fft
        self.hop = hop
        self.window = window
        self.center = center
        self.fmin = fmin
        self.fmax = fmax
        self.ref_mode = ref_mode
        self.floor_db = floor_db
        self.rolloff_pct = rolloff_pct

    def config(self) -> FeatureConfig:
        return FeatureConfig(
            n_mfcc=self.n_mfcc,
            n_mels=self.n_mels,
            frame=FrameParams(n_fft=self.n_fft, hop=self.hop, window=self.window, center=self.center),
            fmin=self.fmin,
            fmax=self.fmax,
            ref_mode=self.ref_mode,
            floor_db=self.floor_db,
            rolloff_pct=self.rolloff_pct,
        )

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        config = self.config()
        return np.vstack([extract_features(clip, config).values for clip in X])

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(feature_names(self.n_mfcc), dtype=object)
