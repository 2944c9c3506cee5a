"""WAV decoding, mono resampling, and the labeled clip manifest.

Decoding is a plain RIFF/WAVE parser supporting the encodings smartphone
recordings actually use (PCM 16-bit, PCM 24-bit, IEEE float32). Anything
else is rejected rather than transcoded. Resampling is band-limited
windowed-sinc interpolation with a Kaiser window.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError, WavFormatError
from .validation import LABELS

CANONICAL_RATE = 22050

# windowed-sinc resampler: zero crossings kept on each side, Kaiser shape
SINC_ZEROS = 64
KAISER_BETA = 12.0

MANIFEST_COLUMNS = ("clip_id", "path", "subject_id", "label")


@dataclass
class RawAudio:
    """Decoded WAV payload before canonicalization.

    channels: (n_channels, n_samples) float64, amplitudes in [-1, 1] for
    integer PCM sources (float32 sources pass through unclamped).
    """

    channels: np.ndarray
    sample_rate: int


@dataclass
class AudioClip:
    """Canonical mono waveform with subject/label metadata.

    Immutable by convention; safe to share across threads.
    """

    clip_id: str
    subject_id: str
    samples: np.ndarray
    sample_rate: int
    label: str | None = None


@dataclass
class ManifestEntry:
    clip_id: str
    path: str
    subject_id: str
    label: str
    fold: int | None = None


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def has_folds(self) -> bool:
        return any(e.fold is not None for e in self.entries)

    def subject_labels(self) -> dict[str, str]:
        return {e.subject_id: e.label for e in self.entries}

    def clips_per_subject(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.subject_id] = counts.get(e.subject_id, 0) + 1
        return counts


def decode_wav(data: bytes) -> RawAudio:
    """Parse a RIFF/WAVE byte stream into de-interleaved float channels.

    Integer PCM is scaled to [-1, 1] by 1 / 2^(bits-1). Raises
    WavFormatError with a distinct message for a malformed header, an
    unsupported encoding, or an empty data chunk.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("malformed WAV header: missing RIFF/WAVE signature")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if body_start + size > len(data):
            raise WavFormatError(
                f"malformed WAV header: chunk {chunk_id!r} overruns the file (truncated?)"
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError("malformed WAV header: fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif chunk_id == b"data":
            payload = data[body_start : body_start + size]
            break  # fmt must precede data in all files we accept
        pos = body_start + size + (size & 1)

    if fmt is None:
        raise WavFormatError("malformed WAV header: no fmt chunk before data")
    if payload is None:
        raise WavFormatError("malformed WAV header: no data chunk")

    format_tag, n_channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if n_channels < 1:
        raise WavFormatError("malformed WAV header: zero channels")
    if sample_rate <= 0:
        raise WavFormatError("malformed WAV header: non-positive sample rate")

    if (format_tag, bits) == (1, 16):
        decode, width = _decode_pcm16, 2
    elif (format_tag, bits) == (1, 24):
        decode, width = _decode_pcm24, 3
    elif (format_tag, bits) == (3, 32):
        decode, width = _decode_float32, 4
    else:
        raise WavFormatError(
            f"unsupported WAV encoding: format tag {format_tag} at {bits} bits "
            "(supported: PCM16, PCM24, IEEE float32)"
        )

    if len(payload) == 0:
        raise WavFormatError("empty audio: WAV data chunk has zero length")
    frame_size = n_channels * width
    if len(payload) % frame_size != 0:
        raise WavFormatError(
            f"malformed WAV data: {len(payload)} bytes is not a multiple of "
            f"the {frame_size}-byte frame"
        )

    flat = decode(payload)
    channels = flat.reshape(-1, n_channels).T.copy()
    return RawAudio(channels=channels, sample_rate=int(sample_rate))


def _decode_pcm16(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0


def _decode_pcm24(payload: bytes) -> np.ndarray:
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    vals = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
    vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
    return vals.astype(np.float64) / float(1 << 23)


def _decode_float32(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype="<f4").astype(np.float64)


def resample_mono(raw: RawAudio, target_rate: int) -> np.ndarray:
    """Mix down to mono and band-limit resample to target_rate.

    Channels are averaged sample-wise; when target_rate equals the source
    rate the mixdown is returned untouched. Output length is
    round(n_in * target / source).
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if raw.channels.ndim != 2 or raw.channels.shape[0] < 1:
        raise ValueError("raw audio must have at least one channel")
    mono = raw.channels.mean(axis=0)
    if target_rate == raw.sample_rate:
        return mono
    return _sinc_resample(mono, raw.sample_rate, target_rate)


def _kaiser(v: np.ndarray) -> np.ndarray:
    # continuous Kaiser window on [-1, 1], zero outside
    inside = np.abs(v) <= 1.0
    arg = np.sqrt(np.maximum(0.0, 1.0 - v * v))
    return np.where(inside, np.i0(KAISER_BETA * arg) / np.i0(KAISER_BETA), 0.0)


def _sinc_resample(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    ratio = rate_out / rate_in
    n_in = x.size
    n_out = int(round(n_in * ratio))
    if n_out == 0:
        return np.zeros(0, dtype=np.float64)
    cutoff = min(1.0, ratio)  # anti-alias when downsampling
    half = SINC_ZEROS / cutoff  # kernel half-width in input samples
    n_taps = int(2 * half) + 2

    out = np.empty(n_out, dtype=np.float64)
    offsets = np.arange(n_taps)
    block = 4096  # cap the (block, n_taps) work matrices
    for start in range(0, n_out, block):
        stop = min(start + block, n_out)
        t = np.arange(start, stop) / ratio
        k = np.ceil(t - half).astype(np.int64)[:, None] + offsets[None, :]
        u = t[:, None] - k
        kern = cutoff * np.sinc(cutoff * u) * _kaiser(u / half)
        kern[(k < 0) | (k >= n_in)] = 0.0
        out[start:stop] = np.einsum("ij,ij->i", kern, x[np.clip(k, 0, n_in - 1)])
    return out


def load_clip(
    path,
    clip_id: str | None = None,
    subject_id: str = "",
    label: str | None = None,
    target_rate: int = CANONICAL_RATE,
) -> AudioClip:
    """Decode a WAV file and normalize it to a canonical mono clip.

    Samples are clamped to [-1, 1] after resampling (the interpolation
    kernel can overshoot full-scale input by a fraction of a percent).
    """
    p = Path(path)
    raw = decode_wav(p.read_bytes())
    samples = resample_mono(raw, target_rate)
    if samples.size == 0:
        raise WavFormatError(f"empty audio: {p} has no samples after resampling")
    if not np.all(np.isfinite(samples)):
        raise WavFormatError(f"non-finite samples decoded from {p}")
    np.clip(samples, -1.0, 1.0, out=samples)
    return AudioClip(
        clip_id=clip_id if clip_id is not None else p.stem,
        subject_id=subject_id,
        samples=samples,
        sample_rate=target_rate,
        label=label,
    )


def load_manifest(text: str) -> Manifest:
    """Parse and validate a clip manifest CSV.

    Header must be exactly clip_id,path,subject_id,label with an optional
    fifth column fold; lines starting with '#' are comments. Labels are
    strict ASD/NT; each subject must carry a single label; clip_ids are
    unique.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(lines))))
    if not rows:
        raise ManifestError("manifest is empty")

    header = [c.strip() for c in rows[0]]
    if tuple(header) not in (MANIFEST_COLUMNS, MANIFEST_COLUMNS + ("fold",)):
        raise ManifestError(
            "manifest header must be clip_id,path,subject_id,label[,fold], "
            f"got {','.join(header)!r}"
        )
    has_fold = len(header) == 5

    entries: list[ManifestEntry] = []
    seen_clips: set[str] = set()
    subject_label: dict[str, str] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ManifestError(f"manifest line {lineno}: expected {len(header)} fields, got {len(row)}")
        clip_id, path, subject_id, label = (c.strip() for c in row[:4])
        if not clip_id or not subject_id:
            raise ManifestError(f"manifest line {lineno}: empty clip_id or subject_id")
        if clip_id in seen_clips:
            raise ManifestError(f"duplicate clip_id: {clip_id!r}")
        seen_clips.add(clip_id)
        if label not in LABELS:
            raise ManifestError(f"unknown label {label!r} for clip {clip_id!r} (expected ASD or NT)")
        if subject_label.setdefault(subject_id, label) != label:
            raise ManifestError(
                f"inconsistent subject label: subject {subject_id!r} has both "
                f"{subject_label[subject_id]} and {label}"
            )
        fold = None
        if has_fold and row[4].strip():
            try:
                fold = int(row[4])
            except ValueError:
                raise ManifestError(f"manifest line {lineno}: fold {row[4]!r} is not an integer") from None
            if fold < 0:
                raise ManifestError(f"manifest line {lineno}: negative fold index {fold}")
        entries.append(ManifestEntry(clip_id, path, subject_id, label, fold))

    if not entries:
        raise ManifestError("manifest has a header but no entries")
    return Manifest(entries)
