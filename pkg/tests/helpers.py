"""Shared test utilities: WAV builders, independent oracles, synthetic corpora.

The oracles here deliberately avoid the code paths they check: the DFT
oracle is a plain O(N^2) matrix product (no FFT), the AUC oracle counts
pairs, the filterbank oracle evaluates the triangle formula pointwise.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np


# ---------------------------------------------------------------- WAV builders

def wav_bytes(channels: np.ndarray, sample_rate: int, encoding: str = "pcm16") -> bytes:
    """Assemble a RIFF/WAVE byte stream from (n_channels, n_samples) floats."""
    channels = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    n_ch, _ = channels.shape
    interleaved = channels.T.ravel()

    if encoding == "pcm16":
        ints = np.clip(np.round(interleaved * 32768.0), -32768, 32767).astype("<i2")
        payload, bits, tag = ints.tobytes(), 16, 1
    elif encoding == "pcm24":
        ints = np.clip(np.round(interleaved * float(1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int64)
        raw = bytearray()
        for v in ints:
            raw += struct.pack("<i", int(v))[:3]
        payload, bits, tag = bytes(raw), 24, 1
    elif encoding == "float32":
        payload, bits, tag = interleaved.astype("<f4").tobytes(), 32, 3
    else:
        raise ValueError(encoding)

    block_align = n_ch * bits // 8
    fmt = struct.pack("<HHIIHH", tag, n_ch, sample_rate, sample_rate * block_align, block_align, bits)
    data_size = len(payload)
    riff_size = 4 + (8 + len(fmt)) + (8 + data_size)
    return (
        b"RIFF" + struct.pack("<I", riff_size) + b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", data_size) + payload
    )


def raw_pcm16_wav(ints: list[int], sample_rate: int = 22050, n_channels: int = 1) -> bytes:
    """PCM16 WAV straight from integer sample values (no float rounding)."""
    payload = np.asarray(ints, dtype="<i2").tobytes()
    block_align = n_channels * 2
    fmt = struct.pack("<HHIIHH", 1, n_channels, sample_rate, sample_rate * block_align, block_align, 16)
    riff_size = 4 + (8 + len(fmt)) + (8 + len(payload))
    return (
        b"RIFF" + struct.pack("<I", riff_size) + b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(payload)) + payload
    )


def sine(freq: float, sr: int, duration: float, amp: float = 1.0, phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(sr * duration))) / sr
    return amp * np.sin(2.0 * np.pi * freq * t + phase)


# ---------------------------------------------------------------- oracles

def naive_dft(x: np.ndarray) -> np.ndarray:
    """Full O(N^2) DFT by explicit matrix product; no FFT anywhere."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return w @ x


def probe_peak_hz(x: np.ndarray, sr: int, fmax: float, step: float = 1.0) -> float:
    """Peak frequency by scanning correlations on a fixed grid (naive)."""
    freqs = np.arange(step, fmax, step)
    t = np.arange(x.size) / sr
    mags = np.abs(np.exp(-2j * np.pi * np.outer(freqs, t)) @ x)
    return float(freqs[int(np.argmax(mags))])


def pair_count_auc(labels01: np.ndarray, scores: np.ndarray) -> float:
    """P(score_pos > score_neg) + 0.5 * P(equal), by explicit pair counting."""
    labels01 = np.asarray(labels01).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[labels01]
    neg = scores[~labels01]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def triangle_filter_oracle(n_mels: int, n_fft: int, sr: int, fmin: float, fmax: float) -> np.ndarray:
    """Pointwise evaluation of the Slaney triangle formula, scalar loops."""

    def to_mel(f):
        return f / (200.0 / 3.0) if f < 1000.0 else 15.0 + np.log(f / 1000.0) / (np.log(6.4) / 27.0)

    def to_hz(m):
        return m * (200.0 / 3.0) if m < 15.0 else 1000.0 * np.exp((np.log(6.4) / 27.0) * (m - 15.0))

    mels = np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2)
    edges = [to_hz(m) for m in mels]
    out = np.zeros((n_mels, n_fft // 2 + 1))
    for b in range(n_mels):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        for i in range(n_fft // 2 + 1):
            f = i * sr / n_fft
            if lo < f < hi:
                w = (f - lo) / (mid - lo) if f <= mid else (hi - f) / (hi - mid)
                out[b, i] = max(0.0, w) * 2.0 / (hi - lo)
            elif f == mid:
                out[b, i] = 2.0 / (hi - lo)
    return out


# ---------------------------------------------------------------- corpora

def fm_tone(rng: np.random.Generator, base_hz: float, vib_hz: float, sr: int, duration: float) -> np.ndarray:
    """Frequency-modulated tone: pitch wobble depth models intonation variance."""
    n = int(round(sr * duration))
    t = np.arange(n) / sr
    f0 = base_hz * (1.0 + rng.uniform(-0.04, 0.04))
    rate = rng.uniform(4.0, 7.0)
    depth = vib_hz * rng.uniform(0.8, 1.2)
    phase = 2.0 * np.pi * f0 * t + (depth / rate) * np.sin(2.0 * np.pi * rate * t) + rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.4, 0.7)
    x = amp * np.sin(phase) + rng.normal(scale=0.01, size=n)
    return np.clip(x, -1.0, 1.0)


def write_manifest(path: Path, rows: list[tuple[str, str, str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "path", "subject_id", "label"])
        w.writerows(rows)


def make_tone_corpus(
    root: Path,
    n_subjects: int = 40,
    clips_per_subject: int = 20,
    seed: int = 20240817,
    sr: int = 22050,
    duration: float = 0.5,
) -> Path:
    """Two-class corpus separated by pitch range and vibrato depth.

    Even-indexed subjects are the high-pitch / strong-vibrato class (ASD
    label), odd-indexed the low-pitch / flat class (NT). Returns the
    manifest path.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for s in range(n_subjects):
        if s % 2 == 0:
            label, base, vib = "ASD", rng.uniform(330.0, 470.0), 30.0
        else:
            label, base, vib = "NT", rng.uniform(160.0, 250.0), 4.0
        subject = f"subj{s:02d}"
        for c in range(clips_per_subject):
            clip_id = f"{subject}_clip{c:02d}"
            wav_path = root / f"{clip_id}.wav"
            wav_path.write_bytes(wav_bytes(fm_tone(rng, base, vib, sr, duration), sr, "pcm16"))
            rows.append((clip_id, str(wav_path), subject, label))
    manifest_path = root / "manifest.csv"
    write_manifest(manifest_path, rows)
    return manifest_path


def permute_manifest_labels(manifest_text: str, seed: int) -> str:
    """Shuffle which subject carries which label (subject-level permutation)."""
    lines = manifest_text.strip().splitlines()
    header, body = lines[0], lines[1:]
    rows = [ln.split(",") for ln in body]
    subjects = sorted({r[2] for r in rows})
    old = {}
    for r in rows:
        old[r[2]] = r[3]
    labels = [old[s] for s in subjects]
    rng = np.random.default_rng(seed)
    shuffled = [labels[i] for i in rng.permutation(len(labels))]
    new = dict(zip(subjects, shuffled))
    out = [header]
    out += [",".join(r[:3] + [new[r[2]]]) for r in rows]
    return "\n".join(out) + "\n"


def make_dc_offset_corpus(
    root: Path,
    n_subjects: int = 20,
    clips_per_subject: int = 20,
    seed: int = 555,
    sr: int = 22050,
    duration: float = 0.25,
) -> Path:
    """Corpus whose only structure is a per-subject DC offset.

    Labels are assigned to subjects at random (balanced), independent of
    the audio, so grouped CV should sit at chance while ungrouped CV can
    re-identify subjects from the offset.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    labels = ["ASD"] * (n_subjects // 2) + ["NT"] * (n_subjects - n_subjects // 2)
    labels = [labels[i] for i in rng.permutation(n_subjects)]
    n = int(round(sr * duration))
    rows = []
    for s in range(n_subjects):
        subject = f"dc{s:02d}"
        offset = rng.uniform(-0.5, 0.5)
        for c in range(clips_per_subject):
            clip_id = f"{subject}_clip{c:02d}"
            x = np.clip(rng.normal(scale=0.05, size=n) + offset, -1.0, 1.0)
            wav_path = root / f"{clip_id}.wav"
            wav_path.write_bytes(wav_bytes(x, sr, "pcm16"))
            rows.append((clip_id, str(wav_path), subject, labels[s]))
    manifest_path = root / "manifest.csv"
    write_manifest(manifest_path, rows)
    return manifest_path


def table1_shape_manifest(seed: int = 12345) -> tuple[list[tuple[str, str, str, str]], int]:
    """Synthetic manifest rows mirroring the real corpus shape:
    425 + 425 clips over 20 + 38 subjects. Returns (rows, max clips/subject)."""
    rng = np.random.default_rng(seed)

    def spread(total, n_subj):
        w = rng.uniform(0.5, 2.0, n_subj)
        counts = np.maximum(1, np.floor(total * w / w.sum()).astype(int))
        while counts.sum() < total:
            counts[rng.integers(0, n_subj)] += 1
        while counts.sum() > total:
            i = rng.integers(0, n_subj)
            if counts[i] > 1:
                counts[i] -= 1
        return counts

    rows = []
    max_clips = 0
    for label, prefix, n_subj, total in (("ASD", "as", 20, 425), ("NT", "nt", 38, 425)):
        counts = spread(total, n_subj)
        max_clips = max(max_clips, int(counts.max()))
        for s, c in enumerate(counts):
            for i in range(c):
                rows.append((f"{prefix}{s:02d}_{i:03d}", "unused.wav", f"{prefix}_subj{s:02d}", label))
    return rows, max_clips
