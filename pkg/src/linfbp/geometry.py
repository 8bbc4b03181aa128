"""Parallel-beam acquisition geometry and the image/detector coordinate map."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam scan: ``n_views`` angles over ``angle_span``, ``n_bins`` detectors.

    Detector bin ``n`` is centred at ``(n - (n_bins - 1)/2 - detector_center_offset) * bin_width``.
    ``angles`` defaults to the uniform sampling ``angle_span * m / n_views``; an
    explicit tuple is kept after view subsampling.
    """

    n_bins: int
    bin_width: float
    n_views: int
    angle_span: float = math.pi
    detector_center_offset: float = 0.0
    angles: tuple = field(default=None)

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ValueError(f"n_bins must be an integer >= 2, got {self.n_bins!r}")
        if int(self.n_views) != self.n_views or self.n_views < 1:
            raise ValueError(f"n_views must be an integer >= 1, got {self.n_views!r}")
        if not (self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise ValueError(f"bin_width must be positive, got {self.bin_width!r}")
        if not (self.angle_span > 0 and math.isfinite(self.angle_span)):
            raise ValueError(f"angle_span must be positive, got {self.angle_span!r}")
        object.__setattr__(self, "n_bins", int(self.n_bins))
        object.__setattr__(self, "n_views", int(self.n_views))
        if self.angles is None:
            angles = tuple(self.angle_span * m / self.n_views for m in range(self.n_views))
        else:
            angles = tuple(float(a) for a in self.angles)
            if len(angles) != self.n_views:
                raise ValueError("len(angles) must equal n_views")
            if any(b <= a for a, b in zip(angles, angles[1:])):
                raise ValueError("angles must be strictly increasing")
            if angles[0] < 0 or angles[-1] >= self.angle_span:
                raise ValueError("angles must lie in [0, angle_span)")
        object.__setattr__(self, "angles", angles)

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=np.float64)

    def trig(self):
        """(cos, sin) tables of the view angles; the one source of trig values."""
        theta = self.theta
        return np.cos(theta), np.sin(theta)

    @property
    def center_index(self) -> float:
        """Fractional bin index of the detector coordinate t = 0."""
        return (self.n_bins - 1) / 2.0 + self.detector_center_offset

    @property
    def view_weight(self) -> float:
        """Summation weight angle_span / M applied when adding view slices."""
        return self.angle_span / self.n_views

    @property
    def is_uniform(self) -> bool:
        uniform = self.angle_span * np.arange(self.n_views) / self.n_views
        return bool(np.allclose(self.angles, uniform, rtol=0.0, atol=1e-12))

    def bin_centers(self) -> np.ndarray:
        n = np.arange(self.n_bins, dtype=np.float64)
        return (n - self.center_index) * self.bin_width

    def to_index(self, t):
        """Physical detector coordinate -> fractional bin index."""
        return t / self.bin_width + self.center_index

    def support_radius(self) -> float:
        """Largest |t| whose bin index lies within half a bin of the detector."""
        lo = self.center_index + 0.5
        hi = self.n_bins - 0.5 - self.center_index
        return min(lo, hi) * self.bin_width

    def to_dict(self) -> dict:
        d = {
            "n_bins": self.n_bins,
            "bin_width_mm": self.bin_width,
            "n_views": self.n_views,
            "angle_span_rad": self.angle_span,
            "detector_center_offset": self.detector_center_offset,
        }
        if not self.is_uniform:
            d["angles_rad"] = list(self.angles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        angles = d.get("angles_rad")
        return cls(
            n_bins=d["n_bins"],
            bin_width=d["bin_width_mm"],
            n_views=d["n_views"],
            angle_span=d["angle_span_rad"],
            detector_center_offset=d.get("detector_center_offset", 0.0),
            angles=tuple(angles) if angles is not None else None,
        )


@dataclass(frozen=True)
class GridSpec:
    """Image grid centred on the origin.

    Column ``j`` sits at ``x_j = (j - (w-1)/2) * pixel_size``; row ``i`` at
    ``y_i = ((h-1)/2 - i) * pixel_size`` so row 0 is the top of the image.
    """

    height: int
    width: int
    pixel_size: float = 1.0

    def __post_init__(self):
        if int(self.height) != self.height or self.height < 1:
            raise ValueError(f"height must be a positive integer, got {self.height!r}")
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"width must be a positive integer, got {self.width!r}")
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size!r}")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @property
    def pixel_area(self) -> float:
        return self.pixel_size * self.pixel_size

    def x_coords(self) -> np.ndarray:
        j = np.arange(self.width, dtype=np.float64)
        return (j - (self.width - 1) / 2.0) * self.pixel_size

    def y_coords(self) -> np.ndarray:
        i = np.arange(self.height, dtype=np.float64)
        return ((self.height - 1) / 2.0 - i) * self.pixel_size

    def circumradius(self) -> float:
        """Distance from the origin to the farthest pixel centre."""
        return math.hypot((self.width - 1) / 2.0, (self.height - 1) / 2.0) * self.pixel_size

    def to_dict(self) -> dict:
        return {"height": self.height, "width": self.width, "pixel_size": self.pixel_size}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(d["height"], d["width"], d.get("pixel_size", 1.0))


@dataclass(frozen=True)
class CoordinateField:
    """Per-pixel detector sampling positions for one view."""

    t_frac: np.ndarray  # fractional bin index, h x w
    nearest: np.ndarray  # round-half-away-from-zero of t_frac, int64
    in_support: np.ndarray  # bool mask, |t_frac - clamp| <= 0.5


def make_geometry(n_bins, bin_width, n_views, angle_span=math.pi, detector_center_offset=0.0):
    return Geometry(n_bins, bin_width, n_views, angle_span, detector_center_offset)


def project_coordinate(x, y, theta):
    """Detector coordinate ``x cos(theta) + y sin(theta)``; broadcasts over arrays."""
    return x * np.cos(theta) + y * np.sin(theta)


def round_half_away(s):
    """Round to nearest integer, ties away from zero."""
    s = np.asarray(s, dtype=np.float64)
    return (np.sign(s) * np.floor(np.abs(s) + 0.5)).astype(np.int64)


def in_support(s, n_bins: int):
    """True where fractional index ``s`` lies within half a bin of the detector."""
    return (s >= -0.5) & (s <= n_bins - 0.5)


def fractional_index(grid: GridSpec, geometry: Geometry, m: int) -> np.ndarray:
    cos_t, sin_t = geometry.trig()
    t = grid.x_coords()[None, :] * cos_t[m] + grid.y_coords()[:, None] * sin_t[m]
    return t / geometry.bin_width + geometry.center_index


def coordinate_field(grid: GridSpec, geometry: Geometry, m: int) -> CoordinateField:
    if not 0 <= m < geometry.n_views:
        raise IndexError(f"view index {m} out of range for {geometry.n_views} views")
    s = fractional_index(grid, geometry, m)
    return CoordinateField(s, round_half_away(s), in_support(s, geometry.n_bins))


def covers_grid(geometry: Geometry, grid: GridSpec) -> bool:
    return geometry.support_radius() >= grid.circumradius() * (1 - 1e-12)


def fitted_geometry(grid: GridSpec, n_views: int, n_bins: int | None = None,
                    angle_span: float = math.pi) -> Geometry:
    """Geometry with ``bin_width == pixel_size`` and enough bins to cover the grid."""
    if n_bins is None:
        half = math.ceil(grid.circumradius() / grid.pixel_size - 0.5)
        n_bins = 2 * max(half, 1) + 1
    return Geometry(n_bins, grid.pixel_size, n_views, angle_span)
