"""Class-probability decoding into direction estimates.

Peaks are classes whose score is not exceeded anywhere within 1.5x the grid
resolution; score plateaus resolve to the lowest class index so decoding is
deterministic. A training-free localizer that histograms frame-integrated
active intensity directions over the grid provides an analytic end-to-end
path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ambiloc import features
from ambiloc.dsp import FoaSpectrogram
from ambiloc.geometry import (
    Direction,
    SphericalGrid,
    direction_from_vector,
    nearest_classes,
)

PEAK_RADIUS_SCALE = 1.5
DEFAULT_THRESHOLD = 0.2
SILENCE_FLOOR = 1e-20
ONSET_CAP = 4.0


@dataclass(frozen=True)
class ClassProbabilities:
    """Per-class scores in [0, 1] over a spherical grid."""

    values: np.ndarray
    grid: SphericalGrid

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) != self.grid.class_count:
            raise ValueError(
                f"{len(values)} scores for a {self.grid.class_count}-class grid"
            )
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PeakPickResult:
    """Peaks as (class, score), best first; shortfall marks a known-count
    request that found fewer local maxima than asked for."""

    peaks: tuple[tuple[int, float], ...]
    shortfall: bool = False

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.peaks)


def average_frames(output: np.ndarray, grid: SphericalGrid) -> ClassProbabilities:
    """Mean over the frame axis of a (frames, classes) network output."""
    output = np.asarray(output, dtype=float)
    if output.ndim != 2:
        raise ValueError(f"expected (frames, classes), got shape {output.shape}")
    return ClassProbabilities(output.mean(axis=0), grid)


def _local_maxima(values: np.ndarray, grid: SphericalGrid) -> list[int]:
    units = grid.unit_vectors()
    radius = PEAK_RADIUS_SCALE * grid.resolution_deg
    cos_radius = np.cos(np.radians(radius))
    out: list[int] = []
    for c in range(len(values)):
        dots = units @ units[c]
        nearby = np.flatnonzero(dots >= cos_radius - 1e-12)
        nearby = nearby[nearby != c]
        higher = values[nearby] > values[c]
        tied_lower = (values[nearby] == values[c]) & (nearby < c)
        if not higher.any() and not tied_lower.any():
            out.append(c)
    return out


def peak_pick(
    p: ClassProbabilities,
    source_count: int | None = None,
    threshold: float | None = None,
) -> PeakPickResult:
    """Select peak classes, either the top source_count or all above threshold.

    Exactly one of the two modes must be given. Scores are used as-is; no
    neighborhood smoothing is applied.
    """
    if (source_count is None) == (threshold is None):
        raise ValueError("give exactly one of source_count or threshold")
    if source_count is not None and source_count < 1:
        raise ValueError("source_count must be at least 1")
    if threshold is not None and not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")

    maxima = _local_maxima(p.values, p.grid)
    maxima.sort(key=lambda c: (-p.values[c], c))
    if source_count is not None:
        chosen = maxima[:source_count]
        shortfall = len(chosen) < source_count
    else:
        chosen = [c for c in maxima if p.values[c] >= threshold]
        shortfall = False
    return PeakPickResult(
        peaks=tuple((c, float(p.values[c])) for c in chosen),
        shortfall=shortfall,
    )


def _frame_votes(spec: FoaSpectrogram) -> tuple[np.ndarray, np.ndarray] | None:
    """Direction votes per frame: (unit vectors, weights), None when silent.

    Active intensity is integrated over frequency before normalizing: the
    interference that early reflections imprint on individual bins forms a
    comb in frequency, so the broadband sum largely cancels it while a
    per-bin histogram would scatter. Frames are weighted by power times an
    onset factor (power relative to the previous frame, capped), because
    the direct path dominates at energy onsets before reflections build up.
    """
    w = spec.data[:, :, 0]
    active = np.real(w[:, :, None] * np.conj(spec.data[:, :, 1:4]))
    power = features.bin_power(spec).sum(axis=1)
    if power.max() <= SILENCE_FLOOR:
        return None
    vectors = active.sum(axis=1)
    previous = np.concatenate([power[:1], power[:-1]])
    onset = np.clip(power / (previous + SILENCE_FLOOR), 0.0, ONSET_CAP)
    weights = power * onset
    norms = np.linalg.norm(vectors, axis=1)
    keep = (weights > np.percentile(weights, 50.0)) & (norms > 0.0)
    if not keep.any():
        keep = norms > 0.0
        if not keep.any():
            return None
    units = vectors[keep] / norms[keep, None]
    return units, weights[keep]


def _vote_tally(
    units: np.ndarray, weights: np.ndarray, grid: SphericalGrid
) -> np.ndarray:
    classes = nearest_classes(units, grid)
    return np.bincount(classes, weights=weights, minlength=grid.class_count)


def histogram_localizer(
    spec: FoaSpectrogram,
    grid: SphericalGrid,
    source_count: int | None = None,
    threshold: float | None = None,
) -> list[Direction]:
    """Training-free decoding from frame-averaged active intensity.

    Each kept frame votes for the grid class nearest its integrated
    intensity direction; the normalized vote histogram is peak-picked like
    a network output. Every picked peak is then refined to the weighted
    mean of the votes within the peak radius, recovering the accuracy the
    grid quantization would otherwise cost.
    """
    votes = _frame_votes(spec)
    if votes is None:
        return []
    units, weights = votes
    tally = _vote_tally(units, weights, grid)
    peak = tally.max()
    if peak <= 0.0:
        return []
    result = peak_pick(
        ClassProbabilities(tally / peak, grid),
        source_count=source_count,
        threshold=threshold,
    )
    grid_units = grid.unit_vectors()
    cos_radius = np.cos(
        np.radians(PEAK_RADIUS_SCALE * grid.resolution_deg)
    )
    out: list[Direction] = []
    for c in result.classes:
        near = units @ grid_units[c] >= cos_radius - 1e-12
        mean = (units[near] * weights[near, None]).sum(axis=0)
        if np.linalg.norm(mean) > 0.0:
            out.append(direction_from_vector(mean))
        else:
            out.append(grid.points[c])
    return out


def intensity_histogram(
    spec: FoaSpectrogram, grid: SphericalGrid
) -> ClassProbabilities | None:
    """Normalized frame-vote histogram in [0, 1], or None for silence."""
    votes = _frame_votes(spec)
    if votes is None:
        return None
    units, weights = votes
    tally = _vote_tally(units, weights, grid)
    peak = tally.max()
    if peak <= 0.0:
        return None
    return ClassProbabilities(tally / peak, grid)


def estimates_to_csv(
    rows: list[tuple[str, list[tuple[Direction, float]]]]
) -> str:
    """One line per estimate: sequence id, rank, azimuth, elevation, score."""
    lines = ["sequence_id,rank,azimuth_deg,elevation_deg,score"]
    for seq_id, estimates in rows:
        for rank, (d, score) in enumerate(estimates):
            lines.append(
                f"{seq_id},{rank},{d.azimuth_deg:.4f},{d.elevation_deg:.4f},"
                f"{score:.6f}"
            )
    return "\n".join(lines) + "\n"
