"""Log-mel spectrogram frontend.

Converts 16 kHz waveforms into normalized log-mel features: power STFT
(reflect-padded so the frame count is exactly ``len(samples) // hop``),
Slaney-style area-normalized mel filterbank, log10 with a linear-power
floor, per-utterance clamp to ``max - dynamic_range``, then an affine
``(x + offset) / scale`` normalization. With the default configuration a
silent input maps to a constant spectrogram at -1.5.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .errors import ConfigError, DataError
from . import flacio

FEATURE_MAGIC = b"MELF"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class FrontendConfig:
    """Parameters of the waveform -> log-mel transform."""

    sample_rate: int = 16000
    window_length: int = 400
    hop_length: int = 160
    n_fft: int = 400
    n_mels: int = 80
    log_floor: float = 1e-10
    dynamic_range: float = 8.0
    normalization_offset: float = 4.0
    normalization_scale: float = 4.0

    def __post_init__(self):
        if min(self.sample_rate, self.window_length, self.hop_length,
               self.n_fft, self.n_mels) <= 0:
            raise ConfigError("frontend counts must be positive")
        if not (self.hop_length <= self.window_length <= self.n_fft):
            raise ConfigError(
                "frontend requires hop_length <= window_length <= n_fft, got "
                f"{self.hop_length}/{self.window_length}/{self.n_fft}")
        if self.log_floor <= 0 or self.normalization_scale == 0:
            raise ConfigError("log_floor must be > 0 and scale nonzero")


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise DataError("waveform must be one-dimensional")
        if not np.isfinite(self.samples).all():
            raise DataError("waveform contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    """Normalized log-mel values, shaped [n_frames, n_mels]."""

    values: np.ndarray
    frame_hop: float
    n_mels: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError("mel values must be a 2-D array")
        if self.values.shape[1] != self.n_mels:
            raise DataError(
                f"mel array has {self.values.shape[1]} bins, expected {self.n_mels}")
        if not np.isfinite(self.values).all():
            raise DataError("mel values contain non-finite cells")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window (the STFT convention, not numpy's symmetric one)."""
    n = np.arange(length, dtype=np.float64)
    return (0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))).astype(np.float32)


def _hz_to_mel_slaney(freq):
    freq = np.asarray(freq, dtype=np.float64)
    mels = freq / (200.0 / 3.0)
    log_region = freq >= 1000.0
    logstep = np.log(6.4) / 27.0
    mels = np.where(log_region, 15.0 + np.log(np.maximum(freq, 1e-12) / 1000.0) / logstep, mels)
    return mels


def _mel_to_hz_slaney(mels):
    mels = np.asarray(mels, dtype=np.float64)
    freqs = mels * (200.0 / 3.0)
    log_region = mels >= 15.0
    logstep = np.log(6.4) / 27.0
    freqs = np.where(log_region, 1000.0 * np.exp(logstep * (mels - 15.0)), freqs)
    return freqs


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Slaney-style area-normalized triangular filters, [n_mels, n_fft//2 + 1]."""
    n_freqs = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_freqs)
    mel_edges = np.linspace(_hz_to_mel_slaney(0.0),
                            _hz_to_mel_slaney(cfg.sample_rate / 2.0),
                            cfg.n_mels + 2)
    hz_edges = _mel_to_hz_slaney(mel_edges)

    weights = np.zeros((cfg.n_mels, n_freqs), dtype=np.float64)
    for m in range(cfg.n_mels):
        lower, center, upper = hz_edges[m], hz_edges[m + 1], hz_edges[m + 2]
        up = (fft_freqs - lower) / (center - lower)
        down = (upper - fft_freqs) / (upper - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
        weights[m] *= 2.0 / (upper - lower)
    return weights.astype(np.float32)


def mel_bin_centers(cfg: FrontendConfig) -> np.ndarray:
    """Center frequency in Hz of each mel bin."""
    mel_edges = np.linspace(_hz_to_mel_slaney(0.0),
                            _hz_to_mel_slaney(cfg.sample_rate / 2.0),
                            cfg.n_mels + 2)
    return _mel_to_hz_slaney(mel_edges[1:-1])


def silence_value(cfg: FrontendConfig = FrontendConfig()) -> float:
    """Normalized value a fully silent frame maps to (-1.5 by default).

    Computed through the same float32 path as compute_logmel so padding
    with this value is bit-identical to running the frontend on silence.
    """
    floor = np.log10(np.float32(cfg.log_floor))
    return float((floor + np.float32(cfg.normalization_offset))
                 / np.float32(cfg.normalization_scale))


def compute_logmel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> MelSpectrogram:
    """Waveform -> normalized log-mel spectrogram of shape [len//hop, n_mels].

    Pure function of (samples, cfg): identical input gives bit-identical
    output. Raises ConfigError on a sample-rate mismatch and DataError on
    non-finite samples (checked at Waveform construction).
    """
    if len(w.samples) == 0:
        raise DataError("cannot compute features of an empty waveform")
    if w.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform is {w.sample_rate} Hz but frontend expects {cfg.sample_rate} Hz")

    samples = w.samples.astype(np.float32)
    n_frames = len(samples) // cfg.hop_length
    pad = cfg.n_fft // 2
    if len(samples) > pad:
        padded = np.pad(samples, pad, mode="reflect")
    else:
        # Too short to reflect fully: reflect what is available, zeros beyond.
        avail = len(samples) - 1
        padded = np.pad(samples, avail, mode="reflect") if avail else samples
        padded = np.pad(padded, pad - avail, mode="constant")
    if n_frames == 0:
        values = np.zeros((0, cfg.n_mels), dtype=np.float32)
        return MelSpectrogram(values, cfg.hop_length / cfg.sample_rate, cfg.n_mels)

    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.n_fft)
    frames = frames[::cfg.hop_length][:n_frames]
    window = hann_window(cfg.window_length)
    if cfg.window_length < cfg.n_fft:
        window = np.pad(window, (0, cfg.n_fft - cfg.window_length))
    spectrum = np.fft.rfft(frames * window, n=cfg.n_fft, axis=1)
    power = (spectrum.real ** 2 + spectrum.imag ** 2).astype(np.float32)

    mel = power @ mel_filterbank(cfg).T
    log_spec = np.log10(np.maximum(mel, np.float32(cfg.log_floor)))
    log_spec = np.maximum(log_spec, log_spec.max() - np.float32(cfg.dynamic_range))
    values = ((log_spec + np.float32(cfg.normalization_offset))
              / np.float32(cfg.normalization_scale))
    return MelSpectrogram(values.astype(np.float32),
                          cfg.hop_length / cfg.sample_rate, cfg.n_mels)


def pad_or_trim(m: MelSpectrogram, target_frames: int,
                fill: float | None = None) -> MelSpectrogram:
    """Force the frame count to target_frames.

    Padding appends frames at the frontend silence value; trimming drops
    trailing frames. Total function on valid inputs.
    """
    if target_frames <= 0:
        raise DataError("target_frames must be positive")
    if fill is None:
        fill = silence_value()
    if m.n_frames == target_frames:
        values = m.values.copy()
    elif m.n_frames > target_frames:
        values = m.values[:target_frames].copy()
    else:
        tail = np.full((target_frames - m.n_frames, m.n_mels), fill, dtype=np.float32)
        values = np.concatenate([m.values, tail], axis=0)
    return MelSpectrogram(values, m.frame_hop, m.n_mels)


def load_audio(path: str | Path, expected_rate: int | None = None) -> Waveform:
    """Decode a WAV (16-bit or float PCM) or FLAC file to a mono Waveform.

    Multichannel audio is downmixed by averaging. When expected_rate is
    given, any other rate is rejected (resampling is out of scope).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"audio file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".wav":
        rate, data = scipy.io.wavfile.read(str(path))
        if data.dtype == np.int16:
            samples = data.astype(np.float32) / 32768.0
        elif data.dtype in (np.float32, np.float64):
            samples = data.astype(np.float32)
        else:
            raise DataError(
                f"unsupported WAV sample format {data.dtype} in {path}; "
                "expected 16-bit or float PCM")
    elif suffix == ".flac":
        samples, rate = flacio.read_flac(path)
    else:
        raise DataError(f"unsupported audio format: {path}")

    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if expected_rate is not None and rate != expected_rate:
        raise ConfigError(
            f"{path} is {rate} Hz but the frontend is configured for {expected_rate} Hz")
    return Waveform(samples.astype(np.float32), int(rate))


def write_features(path: str | Path, m: MelSpectrogram) -> None:
    """Serialize features as a 16-byte header plus little-endian float32 cells."""
    header = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, m.n_frames, m.n_mels)
    payload = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(header + payload)
    tmp.replace(path)


def read_features(path: str | Path,
                  frame_hop: float = 160 / 16000) -> MelSpectrogram:
    """Inverse of write_features."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise DataError(f"{path} is not a feature file (bad magic)")
    version, n_frames, n_mels = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature file version {version}")
    expected = 16 + 4 * n_frames * n_mels
    if len(raw) != expected:
        raise DataError(f"{path}: truncated feature file ({len(raw)} of {expected} bytes)")
    values = np.frombuffer(raw, dtype="<f4", offset=16).reshape(n_frames, n_mels)
    return MelSpectrogram(values.copy(), frame_hop, int(n_mels))
