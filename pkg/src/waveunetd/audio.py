"""Audio ingestion, log-mel extraction and the synthetic training corpus."""

from __future__ import annotations

import dataclasses
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, FormatError, RateError

SAMPLE_RATE = 22050
SEGMENT = 8192
LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = SAMPLE_RATE
    n_fft: int = 1024
    hop: int = 256
    win: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0

    def validate(self):
        if self.win > self.n_fft:
            raise ConfigError("mel.win", f"window {self.win} exceeds n_fft {self.n_fft}")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigError("mel.fmax", f"need 0 <= fmin < fmax <= {self.sample_rate / 2}")
        for key in ("n_fft", "hop", "win", "n_mels"):
            if getattr(self, key) < 1:
                raise ConfigError(f"mel.{key}", "must be positive")
        return self


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __len__(self):
        return len(self.samples)


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (n_mels, F) log-mel
    hop: int = 256

    @property
    def n_frames(self):
        return self.frames.shape[1]


@dataclass
class SegmentPair:
    wave: torch.Tensor  # (1, 1, segment)
    mel: MelSpectrogram
    start: int = 0


# -- WAV -------------------------------------------------------------------

def load_wav(path, sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Read 16-bit PCM WAV, downmixing to mono and scaling by 1/32768."""
    try:
        with wave.open(str(path), "rb") as f:
            width, channels, rate = f.getsampwidth(), f.getnchannels(), f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    if width != 2:
        raise FormatError(f"{path}: only 16-bit PCM is supported, got {8 * width}-bit")
    if rate != sample_rate:
        raise RateError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz (resampling is not supported)")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        pcm = pcm.reshape(-1, channels).mean(axis=1)
    return AudioClip(pcm, rate)


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767 / 32768)
    pcm = np.round(x * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(sample_rate)
        f.writeframes(pcm.tobytes())


# -- spectral analysis ------------------------------------------------------

def hann_window(n: int) -> np.ndarray:
    # periodic Hann, as used for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _padded_window(cfg: MelConfig) -> np.ndarray:
    w = np.zeros(cfg.n_fft)
    left = (cfg.n_fft - cfg.win) // 2
    w[left:left + cfg.win] = hann_window(cfg.win)
    return w


def n_frames(length: int, hop: int = 256) -> int:
    return length // hop + 1


def stft(samples, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Centered (reflect-padded) STFT; returns complex ``(n_fft // 2 + 1, frames)``."""
    x = np.asarray(samples, dtype=np.float64)
    pad = cfg.n_fft // 2
    x = np.pad(x, (pad, pad), mode="reflect")
    count = 1 + (len(x) - cfg.n_fft) // cfg.hop
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(count)[:, None]
    frames = x[idx] * _padded_window(cfg)[None, :]
    return np.fft.rfft(frames, axis=1).T


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(
        f >= min_log_hz,
        min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep,
        f / f_sp,
    )


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f_sp * m)


@lru_cache(maxsize=8)
def _filterbank_cached(cfg: MelConfig) -> np.ndarray:
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2, cfg.n_fft // 2 + 1)
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    widths = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (hz_pts[2:] - hz_pts[:-2]))[:, None]  # area normalization
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Triangular ``(n_mels, n_fft // 2 + 1)`` filterbank with area normalization."""
    return _filterbank_cached(cfg)


def mel_project(magnitudes, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    mel = mel_filterbank(cfg) @ np.asarray(magnitudes, dtype=np.float64)
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), cfg.hop)


def log_mel(samples, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    return mel_project(np.abs(stft(samples, cfg)), cfg)


class TorchLogMel(torch.nn.Module):
    """Differentiable twin of :func:`log_mel` for batched waveforms ``(B, 1, T)``."""

    def __init__(self, cfg: MelConfig = MelConfig()):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("window", torch.from_numpy(hann_window(cfg.win)), persistent=False)
        self.register_buffer("basis", torch.from_numpy(np.array(mel_filterbank(cfg))), persistent=False)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        x = wave.reshape(-1, wave.shape[-1])
        stft_out = torch.stft(
            x, self.cfg.n_fft, hop_length=self.cfg.hop, win_length=self.cfg.win,
            window=self.window.to(x.dtype), center=True, pad_mode="reflect",
            return_complex=True,
        )
        mel = self.basis.to(x.dtype) @ stft_out.abs()
        return torch.log(torch.clamp(mel, min=LOG_FLOOR))


# -- segments and corpus -----------------------------------------------------

def sample_segment(clip: AudioClip, rng: np.random.Generator, segment: int = SEGMENT,
                   cfg: MelConfig = MelConfig()) -> SegmentPair:
    """Cut a hop-aligned random segment and compute its log-mel."""
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < segment:
        x = np.pad(x, (0, segment - len(x)))
    positions = (len(x) - segment) // cfg.hop + 1
    start = cfg.hop * int(rng.integers(positions))
    seg = x[start:start + segment]
    wave_t = torch.from_numpy(seg.astype(np.float32)).reshape(1, 1, segment)
    return SegmentPair(wave_t, log_mel(seg, cfg), start)


def synth_corpus(n_clips: int, seed: int, sample_rate: int = SAMPLE_RATE) -> list[AudioClip]:
    """Harmonic tones with smooth envelopes, peak-normalized to 0.95."""
    if n_clips < 1:
        raise ConfigError("n_clips", "must be >= 1")
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(n_clips):
        length = int(rng.integers(sample_rate, 2 * sample_rate + 1))
        t = np.arange(length) / sample_rate
        f0 = rng.uniform(80.0, 1000.0)
        vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t)
        phase0 = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate
        x = np.zeros(length)
        for k in range(1, int(rng.integers(2, 6)) + 1):
            x += rng.uniform(0.2, 1.0) / k * np.sin(k * phase0 + rng.uniform(0, 2 * np.pi))
        attack = rng.uniform(0.02, 0.2)
        decay = rng.uniform(0.5, 3.0)
        env = np.minimum(t / attack, 1.0) * np.exp(-decay * t / t[-1])
        x *= env
        x *= 0.95 / np.max(np.abs(x))
        clips.append(AudioClip(x, sample_rate))
    return clips


def mel_config_from_dict(d: dict) -> MelConfig:
    names = {f.name for f in dataclasses.fields(MelConfig)}
    for key in d:
        if key not in names:
            raise ConfigError(f"mel.{key}", "unknown key")
    return MelConfig(**d).validate()


def save_corpus(clips, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, clip in enumerate(clips):
        p = out / f"clip_{i:04d}.wav"
        write_wav(p, clip.samples, clip.sample_rate)
        paths.append(p)
    return paths
