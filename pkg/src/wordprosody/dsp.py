"""Waveform to log-mel frontend: Hann STFT, HTK-style mel filterbank."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

LOG_FLOOR = 1e-10


class DSPError(ValueError):
    pass


class MelConfigError(DSPError):
    pass


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 24000
    hop: int = 300
    win: int = 1200
    n_fft: int = 2048
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0

    def __post_init__(self):
        if not (0 < self.hop <= self.win <= self.n_fft):
            raise MelConfigError(f"need 0 < hop <= win <= n_fft, got hop={self.hop} win={self.win} n_fft={self.n_fft}")
        if self.n_mels < 1:
            raise MelConfigError(f"n_mels must be >= 1, got {self.n_mels}")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise MelConfigError(f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin} fmax={self.fmax}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def frame_shift_s(self) -> float:
        return self.hop / self.sample_rate

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.win) // self.hop

    def n_samples_for(self, n_frames: int) -> int:
        """Shortest signal length that yields exactly ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.win

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # T x n_mels
    config: MelConfig

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _hann(win: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)


def frame_signal(signal: np.ndarray, cfg: MelConfig) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise DSPError(f"signal must be 1-D, got shape {signal.shape}")
    if len(signal) < cfg.win:
        raise DSPError(f"signal of {len(signal)} samples is shorter than one window ({cfg.win})")
    T = cfg.n_frames(len(signal))
    idx = np.arange(cfg.win)[None, :] + cfg.hop * np.arange(T)[:, None]
    return signal[idx] * _hann(cfg.win)


def stft_magnitude(signal, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Magnitude spectrum, T x (n_fft/2 + 1); frame t starts at sample t*hop."""
    frames = frame_signal(signal, cfg)
    return np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1))


def filter_centers_hz(cfg: MelConfig) -> np.ndarray:
    """Hz centres of the n_mels triangles (band edges excluded)."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    return _mel_filterbank(cfg).copy()


@lru_cache(maxsize=8)
def _mel_filterbank(cfg: MelConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if len(empty):
        raise MelConfigError(
            f"n_mels={cfg.n_mels} too large for n_fft={cfg.n_fft} at {cfg.sample_rate} Hz: "
            f"{len(empty)} empty filters (first: band {empty[0]})")
    fb.setflags(write=False)
    return fb


def melspectrogram(signal, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    power = stft_magnitude(signal, cfg) ** 2
    mel = power @ _mel_filterbank(cfg).T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), cfg)
