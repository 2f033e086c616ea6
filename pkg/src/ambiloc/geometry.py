"""Directions on the unit sphere and the quasi-uniform classification grid.

The grid divides the sphere into rows of constant elevation whose azimuth
count shrinks with cos(elevation), keeping cell sizes roughly constant.
Every localization estimate in this package is a grid class index; this
module owns the mapping between continuous directions and those classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _wrap_azimuth(az: float) -> float:
    """Wrap an azimuth in degrees into [-180, 180)."""
    az = math.fmod(az + 180.0, 360.0)
    if az < 0.0:
        az += 360.0
    return az - 180.0


@dataclass(frozen=True)
class Direction:
    """A direction of arrival: azimuth and elevation in degrees.

    Azimuth is wrapped into [-180, 180), measured counterclockwise from +x
    in the horizontal plane; elevation lies in [-90, 90], positive up.
    At the poles the azimuth is meaningless and is canonicalized to 0 so
    that equality tests are unambiguous.
    """

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self) -> None:
        el = float(self.elevation_deg)
        if not -90.0 <= el <= 90.0 or not math.isfinite(el):
            raise ValueError(f"elevation {el} outside [-90, 90]")
        az = float(self.azimuth_deg)
        if not math.isfinite(az):
            raise ValueError("azimuth must be finite")
        az = 0.0 if abs(el) == 90.0 else _wrap_azimuth(az)
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector [x, y, z] for this direction."""
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        return np.array(
            [math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el)]
        )


def direction_from_vector(v: np.ndarray) -> Direction:
    """Direction of a (not necessarily unit) Cartesian vector."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot take the direction of a zero or non-finite vector")
    x, y, z = (v / n).tolist()
    el = math.degrees(math.asin(min(1.0, max(-1.0, z))))
    az = math.degrees(math.atan2(y, x))
    return Direction(az, el)


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle angle between two directions, in degrees within [0, 180]."""
    dot = float(np.dot(a.unit_vector(), b.unit_vector()))
    return math.degrees(math.acos(min(1.0, max(-1.0, dot))))


@dataclass(frozen=True)
class SphericalGrid:
    """The quasi-uniform classification grid at a given angular resolution.

    Points are ordered by elevation row (south pole first), then by
    increasing azimuth within a row; the ordering is part of the contract
    since class indices persist in datasets and checkpoints.
    """

    resolution_deg: float
    points: tuple[Direction, ...]
    # unit vectors of all points, shape (C, 3); cached for vectorized argmax
    _units: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        units = np.array([p.unit_vector() for p in self.points])
        units.setflags(write=False)
        object.__setattr__(self, "_units", units)

    @property
    def class_count(self) -> int:
        return len(self.points)

    def unit_vectors(self) -> np.ndarray:
        """(C, 3) read-only array of grid point unit vectors."""
        return self._units


def build_grid(alpha_deg: float) -> SphericalGrid:
    """Build the classification grid with angular resolution ``alpha_deg``.

    Elevation rows run from -90 to +90 in steps of 180/I degrees with
    I = floor(180/alpha); row i holds J_i + 1 evenly spaced azimuths with
    J_i = floor((360/alpha) * cos(elevation_i)), so rows near the poles
    hold fewer points and each pole collapses to a single point.
    """
    alpha = float(alpha_deg)
    if not 0.0 < alpha <= 180.0:
        raise ValueError(f"resolution {alpha} outside (0, 180]")
    I = math.floor(180.0 / alpha)
    points: list[Direction] = []
    for i in range(I + 1):
        el = -90.0 + 180.0 * i / I
        J = math.floor((360.0 / alpha) * math.cos(math.radians(el)))
        for j in range(J + 1):
            az = -180.0 + 360.0 * j / (J + 1)
            points.append(Direction(az, el))
    return SphericalGrid(alpha, tuple(points))


def nearest_class(d: Direction, grid: SphericalGrid) -> int:
    """Index of the grid point closest to ``d``; ties go to the lowest index."""
    dots = grid.unit_vectors() @ d.unit_vector()
    return int(np.argmax(dots))


def nearest_classes(unit_vecs: np.ndarray, grid: SphericalGrid) -> np.ndarray:
    """Vectorized nearest_class over an (N, 3) array of unit vectors."""
    unit_vecs = np.asarray(unit_vecs, dtype=float)
    return np.argmax(unit_vecs @ grid.unit_vectors().T, axis=-1)


def neighbors(c: int, grid: SphericalGrid, radius_deg: float) -> set[int]:
    """Classes other than ``c`` within ``radius_deg`` of grid point ``c``."""
    if radius_deg <= 0.0:
        raise ValueError("radius must be positive")
    units = grid.unit_vectors()
    dots = np.clip(units @ units[c], -1.0, 1.0)
    ang = np.degrees(np.arccos(dots))
    idx = np.flatnonzero(ang <= radius_deg)
    return {int(i) for i in idx if i != c}


def grid_to_table(grid: SphericalGrid) -> str:
    """Serialize a grid as one ``index,azimuth_deg,elevation_deg`` line per class."""
    lines = [
        f"{i},{p.azimuth_deg!r},{p.elevation_deg!r}"
        for i, p in enumerate(grid.points)
    ]
    return "\n".join(lines) + "\n"


def grid_from_table(text: str, resolution_deg: float) -> SphericalGrid:
    """Parse the table format written by :func:`grid_to_table`."""
    points: list[Direction] = []
    for lineno, line in enumerate(text.strip().splitlines()):
        idx_s, az_s, el_s = line.strip().split(",")
        if int(idx_s) != lineno:
            raise ValueError(f"table line {lineno} carries index {idx_s}")
        points.append(Direction(float(az_s), float(el_s)))
    return SphericalGrid(float(resolution_deg), tuple(points))
