"""Normalized acoustic intensity features from Ambisonics spectrograms.

Per time-frequency bin the feature 6-vector stacks the active intensity
[Re{WX*}, Re{WY*}, Re{WZ*}] and reactive intensity [Im{WX*}, Im{WY*},
Im{WZ*}], divided by the bin's sound power |W|^2 + (|X|^2+|Y|^2+|Z|^2)/3.
For a single plane wave this makes the active part equal sqrt(3)/2 times
the source's unit direction vector and zeroes the reactive part, which is
what the classifier (and the training-free histogram decoder) exploit.
"""

from __future__ import annotations

import numpy as np

from .dsp import DEFAULT_STFT, FoaSpectrogram, StftConfig, frame_sequences, stft
from .foa import FoaSignal

FEATURE_CHANNELS = ("Ia_x", "Ia_y", "Ia_z", "Ir_x", "Ir_y", "Ir_z")
POWER_EPS = 1e-12
SEQUENCE_FRAMES = 25
SEQUENCE_HOP = 12


def intensity_vectors(spec: FoaSpectrogram) -> np.ndarray:
    """Raw active/reactive intensity, shape (T, F, 6), physical constants dropped."""
    w = spec.data[:, :, 0]
    prod = w[:, :, None] * np.conj(spec.data[:, :, 1:4])
    return np.concatenate([prod.real, prod.imag], axis=-1)


def bin_power(spec: FoaSpectrogram) -> np.ndarray:
    """Sound power per TF bin: |W|^2 + (|X|^2 + |Y|^2 + |Z|^2) / 3."""
    mag2 = np.abs(spec.data) ** 2
    return mag2[:, :, 0] + mag2[:, :, 1:4].sum(axis=-1) / 3.0


def normalize_power(raw: np.ndarray, spec: FoaSpectrogram, eps: float = POWER_EPS) -> np.ndarray:
    """Divide each bin's intensity 6-vector by its sound power (plus eps guard)."""
    if raw.shape[:2] != spec.data.shape[:2]:
        raise ValueError(f"shape mismatch: {raw.shape} vs {spec.data.shape}")
    return raw / (bin_power(spec) + eps)[:, :, None]


def active_directions(features: np.ndarray) -> np.ndarray:
    """Unit direction vectors of the active-intensity part, shape (..., 3).

    Bins with zero active intensity return zero vectors rather than NaN.
    """
    ia = features[..., 0:3]
    norm = np.linalg.norm(ia, axis=-1, keepdims=True)
    return np.divide(ia, norm, out=np.zeros_like(ia), where=norm > 0)


def features_for_spectrogram(spec: FoaSpectrogram, eps: float = POWER_EPS) -> np.ndarray:
    """Normalized intensity features for every frame of a spectrogram."""
    return normalize_power(intensity_vectors(spec), spec, eps)


def extract_features(
    s: FoaSignal,
    cfg: StftConfig = DEFAULT_STFT,
    seq_len: int = SEQUENCE_FRAMES,
    hop_frames: int = SEQUENCE_HOP,
) -> np.ndarray:
    """Feature sequences for a signal, shape (n_seq, seq_len, n_bins, 6), float32."""
    spec = stft(s, cfg)
    slices = frame_sequences(spec, seq_len, hop_frames)
    out = np.stack([features_for_spectrogram(sl) for sl in slices])
    return out.astype(np.float32)
