"""Shoebox image-source simulator emitting Ambisonics room impulse responses.

Each image source contributes an attenuated, fractionally delayed impulse
encoded with the plane-wave gains of its direction as seen from the
microphone. Fractional delays use an 81-tap Hann-windowed sinc kernel whose
subsample offset is quantized to 1/32 sample, so arrivals can be deposited
onto per-offset impulse trains and convolved once per offset; this keeps a
full SRIR in the tens of milliseconds of compute and, because the kernel
only spreads energy forward from each train index, late-field images can
never perturb earlier samples bitwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .foa import SQRT3, DEFAULT_SAMPLE_RATE, FoaSignal, encode_plane_wave, read_foa_wav, write_foa_wav
from .geometry import Direction, direction_from_vector

SPEED_OF_SOUND = 343.0
KERNEL_TAPS = 81
KERNEL_HALF = KERNEL_TAPS // 2
SUBSAMPLE_BINS = 32
MIN_SPREAD_DISTANCE = 0.1
DEFAULT_TAIL_S = 0.1


@dataclass(frozen=True)
class RoomConfig:
    dimensions: tuple[float, float, float]
    rt60: float
    source_position: tuple[float, float, float]
    mic_position: tuple[float, float, float]
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self) -> None:
        dims = tuple(float(v) for v in self.dimensions)
        src = tuple(float(v) for v in self.source_position)
        mic = tuple(float(v) for v in self.mic_position)
        if any(d <= 0 for d in dims):
            raise ValueError(f"room dimensions must be positive, got {dims}")
        for name, pos in (("source", src), ("mic", mic)):
            if not all(0.0 < p < d for p, d in zip(pos, dims)):
                raise ValueError(f"{name} position {pos} outside room {dims}")
        if src == mic:
            raise ValueError("source and mic positions coincide")
        if self.rt60 < 0.0:
            raise ValueError("rt60 must be non-negative")
        if self.speed_of_sound <= 0.0:
            raise ValueError("speed of sound must be positive")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "source_position", src)
        object.__setattr__(self, "mic_position", mic)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface_area(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def direct_distance(self) -> float:
        return math.dist(self.source_position, self.mic_position)

    def direct_direction(self) -> Direction:
        v = np.subtract(self.source_position, self.mic_position)
        return direction_from_vector(v)


@dataclass(frozen=True)
class Srir:
    """A simulated spatial room impulse response with its direct-path truth."""

    signal: FoaSignal
    direction: Direction
    delay_samples: float
    room: RoomConfig = field(repr=False, default=None)

    def __post_init__(self) -> None:
        if self.signal.n_samples < self.delay_samples:
            raise ValueError("SRIR shorter than its direct-path delay")


def _sabine_root(room: RoomConfig) -> float:
    """The expression under the square root of the inverse-Sabine coefficient."""
    absorbed = 24.0 * room.volume * math.log(10.0)
    return 1.0 - absorbed / (room.speed_of_sound * room.rt60 * room.surface_area)


def rt60_attainable(room: RoomConfig) -> bool:
    """Whether uniform wall absorption can realize the requested rt60."""
    return room.rt60 > 0.0 and _sabine_root(room) > 0.0


def reflection_coefficient(room: RoomConfig) -> float:
    """Uniform wall reflection coefficient from the inverse Sabine formula."""
    if room.rt60 == 0.0:
        return 0.0
    under = _sabine_root(room)
    if under <= 0.0:
        warnings.warn(
            f"rt60 {room.rt60:.3f}s unattainable for room {room.dimensions}; "
            "returning an anechoic coefficient",
            stacklevel=2,
        )
        return 0.0
    return math.sqrt(under)


def _fractional_kernels() -> np.ndarray:
    """Windowed-sinc kernel bank, shape (SUBSAMPLE_BINS + 1, KERNEL_TAPS).

    Row q delays by KERNEL_HALF + q/SUBSAMPLE_BINS samples; the Hann window
    tracks the kernel center so row 0 degenerates to a unit impulse.
    """
    j = np.arange(KERNEL_TAPS, dtype=np.float64)
    tau = KERNEL_HALF + np.arange(SUBSAMPLE_BINS + 1) / SUBSAMPLE_BINS
    t = j[None, :] - tau[:, None]
    win = 0.5 * (1.0 + np.cos(np.pi * t / (KERNEL_HALF + 1)))
    win[np.abs(t) > KERNEL_HALF + 1] = 0.0
    return np.sinc(t) * win


_KERNELS = _fractional_kernels()


def _image_sources(
    room: RoomConfig, t_max: float, max_order: int | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enumerate image sources reachable within ``t_max`` seconds.

    Returns (positions (N,3), reflection counts (N,), distances (N,)).
    """
    dims = np.array(room.dimensions)
    src = np.array(room.source_position)
    mic = np.array(room.mic_position)
    reach = room.speed_of_sound * t_max

    per_axis: list[tuple[np.ndarray, np.ndarray]] = []
    for ax in range(3):
        n_max = int(reach // (2.0 * dims[ax])) + 1
        n = np.arange(-n_max, n_max + 1)
        # mirror parities q=0 (even) and q=1 (odd) along this axis
        coords = np.concatenate([2.0 * n * dims[ax] + src[ax], 2.0 * n * dims[ax] - src[ax]])
        refl = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
        keep = np.abs(coords - mic[ax]) <= reach
        per_axis.append((coords[keep], refl[keep]))

    (cx, rx), (cy, ry), (cz, rz) = per_axis
    # pair x and y first and discard pairs already beyond the reach sphere
    dxy2 = (cx[:, None] - mic[0]) ** 2 + (cy[None, :] - mic[1]) ** 2
    keep = dxy2 <= reach**2
    ix, iy = np.nonzero(keep)
    dxy2 = dxy2[ix, iy]
    rxy = rx[ix] + ry[iy]

    dz2 = (cz - mic[2]) ** 2
    d2 = dxy2[:, None] + dz2[None, :]
    keep2 = d2 <= reach**2
    jxy, jz = np.nonzero(keep2)

    pos = np.stack([cx[ix[jxy]], cy[iy[jxy]], cz[jz]], axis=1)
    refl = rxy[jxy] + rz[jz]
    dist = np.sqrt(d2[jxy, jz])
    if max_order is not None:
        keep3 = refl <= max_order
        pos, refl, dist = pos[keep3], refl[keep3], dist[keep3]
    return pos, refl, dist


def simulate_srir(
    room: RoomConfig,
    max_order: int | None = None,
    duration_s: float | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Srir:
    """Simulate the FOA spatial impulse response of a shoebox room.

    ``duration_s`` defaults to rt60 + 100 ms; ``max_order`` optionally caps
    the reflection count on top of the duration cap. The direct path is
    always present and must fit inside the duration.
    """
    beta = reflection_coefficient(room)
    direct_d = room.direct_distance()
    direct_delay = direct_d / room.speed_of_sound
    if duration_s is None:
        duration_s = room.rt60 + DEFAULT_TAIL_S
    min_needed = direct_delay + (KERNEL_HALF + 1) / sample_rate
    if duration_s < min_needed:
        raise ValueError(
            f"duration {duration_s:.4f}s excludes the direct path at {direct_delay:.4f}s"
        )
    if max_order is not None and max_order < 0:
        raise ValueError("max_order must be non-negative")

    mic = np.array(room.mic_position)
    if beta == 0.0:
        pos = np.array([room.source_position], dtype=float)
        refl = np.zeros(1, dtype=int)
        dist = np.array([direct_d])
    else:
        pos, refl, dist = _image_sources(room, duration_s, max_order)

    amp = beta**refl / (4.0 * math.pi * np.maximum(dist, MIN_SPREAD_DISTANCE))
    unit = (pos - mic[None, :]) / dist[:, None]
    # FOA gains are [1, sqrt(3) u]; fold the amplitude in per channel
    gains = np.empty((len(dist), 4))
    gains[:, 0] = amp
    gains[:, 1:] = SQRT3 * unit * amp[:, None]

    n_out = int(round(duration_s * sample_rate))
    delays = dist / room.speed_of_sound * sample_rate
    n0 = np.floor(delays).astype(np.int64)
    q = np.rint((delays - n0) * SUBSAMPLE_BINS).astype(np.int64)
    n0 += q // SUBSAMPLE_BINS
    q %= SUBSAMPLE_BINS
    inside = n0 < n_out
    n0, q, gains = n0[inside], q[inside], gains[inside]

    trains = np.zeros((4, SUBSAMPLE_BINS, n_out))
    for qi in range(SUBSAMPLE_BINS):
        sel = q == qi
        if not sel.any():
            continue
        for ch in range(4):
            trains[ch, qi] = np.bincount(n0[sel], weights=gains[sel, ch], minlength=n_out)

    # out[c, j + l] += kernels[q, j] * trains[c, q, l], summed over q per tap j
    taps = np.tensordot(_KERNELS[:SUBSAMPLE_BINS], trains, axes=([0], [1]))  # (taps, 4, n_out)
    padded = np.zeros((4, n_out + KERNEL_TAPS - 1))
    for j in range(KERNEL_TAPS):
        padded[:, j : j + n_out] += taps[j]
    h = padded[:, KERNEL_HALF : KERNEL_HALF + n_out]

    return Srir(
        signal=FoaSignal(h, sample_rate),
        direction=room.direct_direction(),
        delay_samples=direct_d / room.speed_of_sound * sample_rate,
        room=room,
    )


def measure_rt60(h: np.ndarray, sample_rate: int, fit_db: tuple[float, float] = (-5.0, -35.0)) -> float:
    """Reverberation time from Schroeder backward integration of one channel.

    Fits a line to the energy-decay curve between ``fit_db`` levels and
    extrapolates to -60 dB.
    """
    h = np.asarray(h, dtype=np.float64)
    energy = np.cumsum(h[::-1] ** 2)[::-1]
    if energy[0] <= 0.0:
        raise ValueError("impulse response has no energy")
    edc = 10.0 * np.log10(np.maximum(energy / energy[0], 1e-30))
    hi, lo = fit_db
    idx = np.nonzero((edc <= hi) & (edc >= lo))[0]
    if len(idx) < 2:
        raise ValueError("decay curve too short for the requested fit range")
    t = idx / sample_rate
    slope, _ = np.polyfit(t, edc[idx], 1)
    if slope >= 0.0:
        raise ValueError("energy-decay curve does not decay")
    return -60.0 / slope


def speech_shaped_noise(n_samples: int, rng: np.random.Generator, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """White noise shaped to fall off 6 dB/octave above 500 Hz."""
    white = rng.standard_normal(n_samples)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n_samples, d=1.0 / sample_rate)
    spec *= 1.0 / np.sqrt(1.0 + (f / 500.0) ** 2)
    return np.fft.irfft(spec, n=n_samples)


def fibonacci_directions(n: int) -> list[Direction]:
    """n quasi-uniform directions on the sphere via the golden-angle spiral."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    out = []
    for i in range(n):
        z = 1.0 - 2.0 * (i + 0.5) / n
        r = math.sqrt(max(0.0, 1.0 - z * z))
        th = golden * i
        out.append(direction_from_vector(np.array([r * math.cos(th), r * math.sin(th), z])))
    return out


def diffuse_babble(
    duration_s: float,
    n_directions: int,
    rng_seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> FoaSignal:
    """Pseudo-diffuse babble: independent speech-shaped noise from a sphere
    of quasi-uniform directions, W-channel power normalized to 1."""
    if duration_s <= 0.0:
        raise ValueError("duration must be positive")
    if n_directions < 8:
        raise ValueError("need at least 8 directions for a usable diffuse field")
    rng = np.random.default_rng(rng_seed)
    n = int(round(duration_s * sample_rate))
    total = np.zeros((4, n))
    for d in fibonacci_directions(n_directions):
        stream = speech_shaped_noise(n, rng, sample_rate)
        total += encode_plane_wave(stream, d, sample_rate).channels
    power = float(np.mean(total[0] ** 2))
    total /= math.sqrt(power)
    return FoaSignal(total, sample_rate)


def write_srir(wav_path: str | Path, srir: Srir) -> None:
    """Write an SRIR as a 4-channel WAV plus a key=value sidecar (.meta.txt)."""
    wav_path = Path(wav_path)
    write_foa_wav(wav_path, srir.signal)
    room = srir.room
    lines = [
        f"azimuth_deg={srir.direction.azimuth_deg!r}",
        f"elevation_deg={srir.direction.elevation_deg!r}",
        f"delay_samples={srir.delay_samples!r}",
    ]
    if room is not None:
        lines += [
            f"dimensions={room.dimensions[0]!r},{room.dimensions[1]!r},{room.dimensions[2]!r}",
            f"rt60={room.rt60!r}",
            f"source_position={room.source_position[0]!r},{room.source_position[1]!r},{room.source_position[2]!r}",
            f"mic_position={room.mic_position[0]!r},{room.mic_position[1]!r},{room.mic_position[2]!r}",
            f"speed_of_sound={room.speed_of_sound!r}",
        ]
    wav_path.with_suffix(".meta.txt").write_text("\n".join(lines) + "\n")


def read_srir(wav_path: str | Path) -> Srir:
    """Read an SRIR written by :func:`write_srir`."""
    wav_path = Path(wav_path)
    signal = read_foa_wav(wav_path)
    meta: dict[str, str] = {}
    for line in wav_path.with_suffix(".meta.txt").read_text().splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            meta[k] = v
    room = None
    if "dimensions" in meta:
        parse3 = lambda s: tuple(float(x) for x in s.split(","))
        room = RoomConfig(
            dimensions=parse3(meta["dimensions"]),
            rt60=float(meta["rt60"]),
            source_position=parse3(meta["source_position"]),
            mic_position=parse3(meta["mic_position"]),
            speed_of_sound=float(meta["speed_of_sound"]),
        )
    return Srir(
        signal=signal,
        direction=Direction(float(meta["azimuth_deg"]), float(meta["elevation_deg"])),
        delay_samples=float(meta["delay_samples"]),
        room=room,
    )
