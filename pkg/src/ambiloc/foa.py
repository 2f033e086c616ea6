"""First-order Ambisonics plane-wave encoding and 4-channel signal containers.

Channel order is fixed as W, X, Y, Z: the omnidirectional pressure and the
three orthogonal dipoles, with the dipole gains sqrt(3) times the direction
cosines. All downstream intensity arithmetic assumes exactly this scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .geometry import Direction

SQRT3 = math.sqrt(3.0)
DEFAULT_SAMPLE_RATE = 16000
CHANNEL_NAMES = ("W", "X", "Y", "Z")


@dataclass(frozen=True)
class FoaGains:
    """Per-channel gains applied to a plane wave from one direction."""

    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


def encode_direction(d: Direction) -> FoaGains:
    """Gains [1, sqrt(3)*ux, sqrt(3)*uy, sqrt(3)*uz] for direction ``d``."""
    ux, uy, uz = d.unit_vector().tolist()
    return FoaGains(1.0, SQRT3 * ux, SQRT3 * uy, SQRT3 * uz)


def decode_gains(g: FoaGains) -> Direction:
    """Recover the encoded direction from dipole gains."""
    uz = min(1.0, max(-1.0, g.z / SQRT3))
    el = math.degrees(math.asin(uz))
    if abs(el) >= 90.0 or (g.x == 0.0 and g.y == 0.0):
        return Direction(0.0, el)
    return Direction(math.degrees(math.atan2(g.y, g.x)), el)


class FoaSignal:
    """Four equal-length sample channels (W, X, Y, Z) at one sample rate."""

    __slots__ = ("channels", "sample_rate")

    def __init__(self, channels: np.ndarray, sample_rate: int = DEFAULT_SAMPLE_RATE):
        channels = np.asarray(channels, dtype=np.float64)
        if channels.ndim != 2 or channels.shape[0] != 4:
            raise ValueError(f"expected channels of shape (4, n), got {channels.shape}")
        if sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.channels = channels
        self.sample_rate = int(sample_rate)

    @property
    def w(self) -> np.ndarray:
        return self.channels[0]

    @property
    def x(self) -> np.ndarray:
        return self.channels[1]

    @property
    def y(self) -> np.ndarray:
        return self.channels[2]

    @property
    def z(self) -> np.ndarray:
        return self.channels[3]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def __repr__(self) -> str:
        return f"FoaSignal(n_samples={self.n_samples}, sample_rate={self.sample_rate})"


def encode_plane_wave(p: np.ndarray, d: Direction, sample_rate: int = DEFAULT_SAMPLE_RATE) -> FoaSignal:
    """Encode a mono signal as a plane wave arriving from direction ``d``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a non-empty mono sample array")
    gains = encode_direction(d).as_array()
    return FoaSignal(gains[:, None] * p[None, :], sample_rate)


def mix_foa(signals: list[FoaSignal]) -> FoaSignal:
    """Channel-wise sum of signals, zero-padded to the longest one."""
    if not signals:
        raise ValueError("nothing to mix")
    rates = {s.sample_rate for s in signals}
    if len(rates) != 1:
        raise ValueError(f"mismatched sample rates: {sorted(rates)}")
    n = max(s.n_samples for s in signals)
    out = np.zeros((4, n))
    for s in signals:
        out[:, : s.n_samples] += s.channels
    return FoaSignal(out, signals[0].sample_rate)


def write_foa_wav(path: str | Path, signal: FoaSignal) -> None:
    """Write a 4-channel 32-bit float WAVE file in W,X,Y,Z order."""
    data = signal.channels.T.astype(np.float32)
    wavfile.write(str(path), signal.sample_rate, data)


def read_foa_wav(path: str | Path) -> FoaSignal:
    """Read a 4-channel WAVE file written by :func:`write_foa_wav`."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 channels, got shape {data.shape}")
    if data.dtype.kind == "i":
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max)
    return FoaSignal(data.T.astype(np.float64), rate)
