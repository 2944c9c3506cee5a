"""Spectral kernels: STFT power, mel filterbank, MFCC, chroma, descriptors.

Conventions (all defaults, none sacred): n_fft 2048, hop 512, periodic Hann
window, centered frames via reflect padding, 128 Slaney-scale mel bands with
area normalization, dB referenced to the spectrogram maximum and floored
80 dB below it. Changing any of these changes every downstream number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

POWER_FLOOR = 1e-10
DB_RANGE = 80.0  # dynamic range of dB clamp and of the PGM pixel mapping

WINDOW_KINDS = ("hann", "rectangular")
REF_MODES = ("max", "unit")


@dataclass
class FrameParams:
    """Framing parameters for every per-frame analysis in this module."""

    n_fft: int = 2048
    hop: int = 512
    window: str = "hann"
    center: bool = True

    def __post_init__(self):
        if self.n_fft < 2:
            raise ValueError(f"n_fft must be >= 2, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ValueError(f"hop must satisfy 0 < hop <= n_fft, got {self.hop}")
        if self.window not in WINDOW_KINDS:
            raise ValueError(f"window must be one of {WINDOW_KINDS}, got {self.window!r}")


@dataclass
class PowerSpectrogram:
    """|DFT|^2 per frame; row r is frequency r * sample_rate / n_fft."""

    bins: np.ndarray  # (n_fft//2 + 1, n_frames), nonnegative
    sample_rate: int
    params: FrameParams

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.shape[0]) * (self.sample_rate / self.params.n_fft)


@dataclass
class MelSpectrogramDb:
    bands: np.ndarray  # (n_mels, n_frames), dB
    n_mels: int
    floor_db: float
    ref_mode: str


@dataclass
class SpectralDescriptors:
    centroid: np.ndarray
    bandwidth: np.ndarray
    rolloff: np.ndarray


@dataclass
class FrameStats:
    zcr: np.ndarray
    rms: np.ndarray


def _frame_signal(samples, params: FrameParams) -> np.ndarray:
    """Slice the signal into (n_frames, n_fft) rows, reflect-padding if centered."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty input signal")
    if params.center:
        pad = params.n_fft // 2
        if pad > 0:
            x = np.pad(x, pad, mode="reflect")
    elif x.size < params.n_fft:
        raise ValueError(
            f"signal of {x.size} samples is shorter than n_fft={params.n_fft} with center disabled"
        )
    return np.lib.stride_tricks.sliding_window_view(x, params.n_fft)[:: params.hop]


def _window(params: FrameParams) -> np.ndarray:
    if params.window == "hann":
        # periodic Hann
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(params.n_fft) / params.n_fft))
    return np.ones(params.n_fft)


def stft_power(samples, sample_rate: int, params: FrameParams) -> PowerSpectrogram:
    """Short-time power spectrogram, keeping bins 0..n_fft/2."""
    frames = _frame_signal(samples, params)
    spec = np.fft.rfft(frames * _window(params), axis=1)
    power = np.abs(spec) ** 2
    return PowerSpectrogram(bins=power.T.copy(), sample_rate=sample_rate, params=params)


def hz_to_mel(freq):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    freq = np.asarray(freq, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    linear = freq / f_sp
    return np.where(freq >= min_log_hz, min_log_mel + np.log(np.maximum(freq, min_log_hz) / min_log_hz) / logstep, linear)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_mel = 1000.0 / f_sp
    logstep = np.log(6.4) / 27.0
    linear = mel * f_sp
    return np.where(mel >= min_log_mel, 1000.0 * np.exp(logstep * (mel - min_log_mel)), linear)


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular mel filters, (n_mels, n_fft//2 + 1), area-normalized.

    Filter centers are equally spaced on the Slaney mel scale; each filter
    is scaled by 2 / (f_upper - f_lower). Raises if fmax exceeds Nyquist or
    if any band is too narrow to cover a single FFT bin.
    """
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if fmax > nyquist:
        raise ValueError(f"fmax above Nyquist: {fmax} > {nyquist}")
    if not 0.0 <= fmin < fmax:
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")

    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)

    lower = edges[:-2][:, None]
    center = edges[1:-1][:, None]
    upper = edges[2:][:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights *= (2.0 / (upper - lower))

    empty = np.nonzero(weights.sum(axis=1) == 0.0)[0]
    if empty.size:
        raise ValueError(
            f"mel band {empty[0]} has empty support: {n_mels} bands exceed the "
            f"resolution of n_fft={n_fft} at {sample_rate} Hz"
        )
    return weights


def mel_power_to_db(mel_power: np.ndarray, ref_mode: str = "max", floor_db: float = -80.0) -> MelSpectrogramDb:
    """Convert mel power to dB, floored and clamped to a fixed dynamic range."""
    if ref_mode not in REF_MODES:
        raise ValueError(f"ref_mode must be one of {REF_MODES}, got {ref_mode!r}")
    if floor_db >= 0:
        raise ValueError(f"floor_db must be negative, got {floor_db}")
    floored = np.maximum(mel_power, POWER_FLOOR)
    ref = floored.max() if ref_mode == "max" else 1.0
    db = 10.0 * np.log10(floored / ref)
    db = np.maximum(db, db.max() + floor_db)
    return MelSpectrogramDb(bands=db, n_mels=db.shape[0], floor_db=floor_db, ref_mode=ref_mode)


def mel_from_power(
    power_spec: PowerSpectrogram,
    n_mels: int = 128,
    fmin: float = 0.0,
    fmax: float | None = None,
    ref_mode: str = "max",
    floor_db: float = -80.0,
) -> MelSpectrogramDb:
    fb = mel_filterbank(n_mels, power_spec.params.n_fft, power_spec.sample_rate, fmin, fmax)
    return mel_power_to_db(fb @ power_spec.bins, ref_mode=ref_mode, floor_db=floor_db)


def mel_spectrogram_db(
    samples,
    sample_rate: int,
    params: FrameParams | None = None,
    n_mels: int = 128,
    fmin: float = 0.0,
    fmax: float | None = None,
    ref_mode: str = "max",
    floor_db: float = -80.0,
) -> MelSpectrogramDb:
    """Mel spectrogram in dB straight from a waveform."""
    params = params if params is not None else FrameParams()
    return mel_from_power(
        stft_power(samples, sample_rate, params),
        n_mels=n_mels,
        fmin=fmin,
        fmax=fmax,
        ref_mode=ref_mode,
        floor_db=floor_db,
    )


def mfcc(mel_db: MelSpectrogramDb, n_mfcc: int = 20) -> np.ndarray:
    """Orthonormal DCT-II of the dB mel spectrum per frame, first n_mfcc rows."""
    if n_mfcc > mel_db.n_mels:
        raise ValueError(f"n_mfcc={n_mfcc} exceeds n_mels={mel_db.n_mels}")
    coeffs = scipy.fft.dct(mel_db.bands, type=2, axis=0, norm="ortho")
    return coeffs[:n_mfcc]


def chroma(power_spec: PowerSpectrogram) -> np.ndarray:
    """12-bin pitch-class energy profile per frame, A440 tuning, class 9 = A.

    Each FFT bin's power is assigned to round(12 * log2(f / 440)) + 9 mod 12;
    the DC bin carries no pitch and is skipped. Frames are normalized by
    their maximum; silent frames stay all zero.
    """
    freqs = power_spec.frequencies
    n_bins = freqs.size
    pitch_class = np.zeros(n_bins, dtype=np.int64)
    pitch_class[1:] = (np.round(12.0 * np.log2(freqs[1:] / 440.0)).astype(np.int64) + 9) % 12

    projection = np.zeros((12, n_bins))
    projection[pitch_class[1:], np.arange(1, n_bins)] = 1.0
    raw = projection @ power_spec.bins

    peak = raw.max(axis=0)
    scale = np.where(peak > 0.0, peak, 1.0)
    return raw / scale


def spectral_descriptors(power_spec: PowerSpectrogram, rolloff_pct: float = 0.85) -> SpectralDescriptors:
    """Per-frame centroid, bandwidth, and rolloff in Hz; silent frames give 0."""
    if not 0.0 < rolloff_pct <= 1.0:
        raise ValueError(f"rolloff_pct must be in (0, 1], got {rolloff_pct}")
    p = power_spec.bins
    freqs = power_spec.frequencies

    total = p.sum(axis=0)
    silent = total == 0.0
    safe = np.where(silent, 1.0, total)

    centroid = (freqs[:, None] * p).sum(axis=0) / safe
    spread = (freqs[:, None] - centroid[None, :]) ** 2
    bandwidth = np.sqrt((spread * p).sum(axis=0) / safe)

    cum = np.cumsum(p, axis=0)
    reached = cum >= (rolloff_pct * cum[-1])[None, :]
    rolloff = freqs[np.argmax(reached, axis=0)]

    zero = np.zeros_like(centroid)
    return SpectralDescriptors(
        centroid=np.where(silent, zero, centroid),
        bandwidth=np.where(silent, zero, bandwidth),
        rolloff=np.where(silent, zero, rolloff),
    )


def frame_stats(samples, params: FrameParams) -> FrameStats:
    """Per-frame zero-crossing rate and RMS on unwindowed frames.

    Windowing would bias both statistics, so frames are taken exactly as in
    stft_power but with no taper applied.
    """
    frames = _frame_signal(samples, params)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    nonneg = frames >= 0.0
    flips = np.count_nonzero(nonneg[:, 1:] != nonneg[:, :-1], axis=1)
    zcr = flips / (params.n_fft - 1)
    return FrameStats(zcr=zcr, rms=rms)


def export_spectrogram_pgm(mel_db: MelSpectrogramDb) -> bytes:
    """Binary PGM (P5) image of the mel spectrogram, band 0 at the bottom.

    Pixel = round(255 * (dB - (max - 80)) / 80), clamped to [0, 255].
    """
    bands = mel_db.bands
    if bands.size == 0:
        raise ValueError("empty mel spectrogram")
    lo = bands.max() - DB_RANGE
    pixels = np.clip(np.rint(255.0 * (bands - lo) / DB_RANGE), 0, 255).astype(np.uint8)
    image = pixels[::-1, :]
    height, width = image.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + image.tobytes()


def export_spectrogram_csv(mel_db: MelSpectrogramDb) -> str:
    """Matrix dump, one row per mel band, %.6f values."""
    rows = (",".join("%.6f" % v for v in row) for row in mel_db.bands)
    return "\n".join(rows) + "\n"
