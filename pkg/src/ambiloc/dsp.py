"""STFT analysis/synthesis, convolution, SNR mixing, and sequence framing.

The analysis window is the sinusoid w[n] = sin(pi*(n+0.5)/fft_size), which
is power-complementary at 50% overlap (w^2[n] + w^2[n+hop] = 1), so using
the same window for analysis and overlap-add synthesis reconstructs the
interior of the signal exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .foa import FoaSignal


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 512
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        if self.fft_size <= 0 or self.hop <= 0:
            raise ValueError("fft_size and hop must be positive")
        if self.hop * 2 != self.fft_size:
            raise ValueError("window design requires 50% overlap (hop = fft_size/2)")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        n = np.arange(self.fft_size)
        return np.sin(np.pi * (n + 0.5) / self.fft_size)

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.fft_size:
            return 0
        return (n_samples - self.fft_size) // self.hop + 1


DEFAULT_STFT = StftConfig()


class FoaSpectrogram:
    """Complex STFT frames of a 4-channel signal, shape (T, n_bins, 4)."""

    __slots__ = ("data", "config")

    def __init__(self, data: np.ndarray, config: StftConfig = DEFAULT_STFT):
        data = np.asarray(data)
        if data.ndim != 3 or data.shape[2] != 4:
            raise ValueError(f"expected shape (T, F, 4), got {data.shape}")
        if data.shape[1] != config.n_bins:
            raise ValueError(
                f"expected {config.n_bins} frequency bins, got {data.shape[1]}"
            )
        self.data = np.asarray(data, dtype=np.complex128)
        self.config = config

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def __repr__(self) -> str:
        return f"FoaSpectrogram(n_frames={self.n_frames}, n_bins={self.n_bins})"


def stft(s: FoaSignal, cfg: StftConfig = DEFAULT_STFT) -> FoaSpectrogram:
    """Windowed DFT frames at hop intervals; no padding beyond the last full frame."""
    n = s.n_samples
    if n < cfg.fft_size:
        raise ValueError(f"signal of {n} samples is shorter than one {cfg.fft_size} frame")
    t = cfg.frame_count(n)
    idx = np.arange(t)[:, None] * cfg.hop + np.arange(cfg.fft_size)[None, :]
    frames = s.channels[:, idx] * cfg.window()[None, None, :]
    spec = np.fft.rfft(frames, axis=-1)
    return FoaSpectrogram(np.moveaxis(spec, 0, -1), cfg)


def istft(spec: FoaSpectrogram, cfg: StftConfig | None = None) -> FoaSignal:
    """Overlap-add synthesis with the same window used for analysis."""
    cfg = cfg or spec.config
    t = spec.n_frames
    frames = np.fft.irfft(np.moveaxis(spec.data, -1, 0), n=cfg.fft_size, axis=-1)
    frames *= cfg.window()[None, None, :]
    n_out = (t - 1) * cfg.hop + cfg.fft_size
    out = np.zeros((4, n_out))
    for k in range(t):
        out[:, k * cfg.hop : k * cfg.hop + cfg.fft_size] += frames[:, k]
    return FoaSignal(out, cfg.sample_rate)


def convolve(dry: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full linear convolution of two 1-D arrays, length n + m - 1."""
    dry = np.asarray(dry, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if dry.size == 0 or kernel.size == 0:
        raise ValueError("convolution inputs must be non-empty")
    return fftconvolve(dry, kernel, mode="full")


def mix_at_snr(clean: FoaSignal, noise: FoaSignal, snr_db: float, rng_seed: int) -> FoaSignal:
    """Add noise scaled so the W-channel power ratio clean/noise is 10^(snr/10).

    The noise must be at least as long as the clean signal; a random crop
    offset drawn from ``rng_seed`` selects which stretch of noise is used.
    """
    if clean.n_samples == 0:
        raise ValueError("clean signal is empty")
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("sample rates differ")
    if noise.n_samples < clean.n_samples:
        raise ValueError("noise must be at least as long as the clean signal")
    rng = np.random.default_rng(rng_seed)
    offset = int(rng.integers(0, noise.n_samples - clean.n_samples + 1))
    crop = noise.channels[:, offset : offset + clean.n_samples]
    p_clean = float(np.mean(clean.w**2))
    p_noise = float(np.mean(crop[0] ** 2))
    if p_noise == 0.0:
        raise ValueError("noise has zero power on the W channel")
    scale = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return FoaSignal(clean.channels + scale * crop, clean.sample_rate)


def frame_sequences(
    spec: FoaSpectrogram, seq_len: int = 25, hop_frames: int = 12
) -> list[FoaSpectrogram]:
    """Slice a spectrogram into fixed-length frame sequences.

    Slices start at 0, hop_frames, 2*hop_frames, ... and only slices that
    fit entirely inside the spectrogram are returned; no padding.
    """
    if seq_len <= 0 or hop_frames <= 0:
        raise ValueError("seq_len and hop_frames must be positive")
    t = spec.n_frames
    if t < seq_len:
        raise ValueError(f"{t} frames cannot fill a {seq_len}-frame sequence")
    out = []
    start = 0
    while start + seq_len <= t:
        out.append(FoaSpectrogram(spec.data[start : start + seq_len], spec.config))
        start += hop_frames
    return out
