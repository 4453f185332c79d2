"""STFT, mel filterbank and per-leg log-mel stacks for contact-microphone audio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .scene import N_LEGS

LOG_EPSILON = 1e-6


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 2048
    hop: int = 512
    n_mels: int = 128
    fmax: float = 8192.0
    fmin: float = 0.0
    sample_rate: int = 16384
    segment_s: float = 0.5

    def __post_init__(self):
        if self.fmax > self.sample_rate / 2:
            raise ConfigError("fmax exceeds the Nyquist frequency")
        if not 0 <= self.fmin < self.fmax:
            raise ConfigError("need 0 <= fmin < fmax")
        if not 0 < self.hop <= self.n_fft:
            raise ConfigError("hop must be in (0, n_fft]")

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_s * self.sample_rate))

    @property
    def n_frames(self) -> int:
        return 1 + (self.segment_samples - self.n_fft) // self.hop


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def frame_signal(waveform, n_fft: int, hop: int) -> np.ndarray:
    x = np.asarray(waveform, dtype=float)
    if x.ndim != 1 or len(x) < n_fft:
        raise InputError(f"waveform must be 1-D with at least n_fft={n_fft} samples")
    n_frames = 1 + (len(x) - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(waveform, n_fft: int = 2048, hop: int = 512) -> np.ndarray:
    """Magnitude of the one-sided DFT of Hann-windowed, unpadded frames.

    Returns an array of shape ``(n_fft // 2 + 1, n_frames)``.
    """
    frames = frame_signal(waveform, n_fft, hop) * np.hanning(n_fft + 1)[:-1]
    return np.abs(np.fft.rfft(frames, axis=1)).T


def mel_filterbank(config: MelConfig = MelConfig()) -> np.ndarray:
    """Triangular filters, unit peak, centers evenly spaced in mel."""
    n_bins = config.n_fft // 2 + 1
    freqs = np.arange(n_bins) * config.sample_rate / config.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(bank.sum(axis=1) == 0)
    if empty.size:
        raise ConfigError(f"{empty.size} mel filters contain no FFT bin; lower n_mels or raise n_fft")
    return bank


def filter_centers(config: MelConfig = MelConfig()) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2))[1:-1]


def mel_spectrogram(waveform, config: MelConfig = MelConfig(), bank=None) -> np.ndarray:
    """Natural-log mel power spectrogram of the first ``segment_s`` seconds."""
    x = np.asarray(waveform, dtype=float)
    n = config.segment_samples
    if len(x) < n:
        raise InputError(f"waveform shorter than the {config.segment_s} s segment")
    bank = mel_filterbank(config) if bank is None else bank
    power = stft(x[:n], config.n_fft, config.hop) ** 2
    return np.log(bank @ power + LOG_EPSILON)


def stack_legs(mels) -> np.ndarray:
    """Stack four per-leg log-mel matrices, front-left first, into ``(4, n_mels, T)``."""
    mels = [np.asarray(m) for m in mels]
    if len(mels) != N_LEGS:
        raise InputError(f"expected {N_LEGS} leg spectrograms, got {len(mels)}")
    if any(m.shape != mels[0].shape for m in mels):
        raise InputError("leg spectrograms differ in shape")
    return np.stack(mels)


def frame_mel_stack(audio, config: MelConfig = MelConfig()) -> np.ndarray:
    bank = mel_filterbank(config)
    return stack_legs([mel_spectrogram(w, config, bank) for w in audio])
