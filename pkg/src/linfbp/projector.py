"""Discrete forward projection and acquisition degradation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .geometry import Geometry, GridSpec, covers_grid

I0_FULL_DOSE = 1.0e6


@dataclass(frozen=True)
class Sinogram:
    """N x M samples (rows: detector bins, columns: views)."""

    samples: np.ndarray
    geometry: Geometry
    kind: str = "raw"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (self.geometry.n_bins, self.geometry.n_views):
            raise ValueError(
                f"sinogram shape {samples.shape} does not match geometry "
                f"({self.geometry.n_bins}, {self.geometry.n_views})"
            )
        if self.kind not in ("raw", "filtered"):
            raise ValueError(f"kind must be 'raw' or 'filtered', got {self.kind!r}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("sinogram contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def shape(self):
        return self.samples.shape


@dataclass(frozen=True)
class ImageGrid:
    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(f"image shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", values)


def forward_project(image: ImageGrid, geometry: Geometry, mask: bool = False,
                    backend=None) -> Sinogram:
    """Pixel-driven projection.

    Each pixel value, scaled by ``pixel_area / bin_width``, is split between the
    two bins bracketing its projected coordinate with linear weights. The
    resulting operator is ``(pixel_area / bin_width)`` times the transpose of
    the unweighted linear backprojection.

    Raises ``ValueError`` if the detector does not cover the grid's
    circumscribed circle, unless ``mask=True`` in which case uncovered pixels
    are dropped with a warning.
    """
    grid = image.grid
    if not covers_grid(geometry, grid):
        if not mask:
            raise ValueError(
                f"detector half-width {geometry.support_radius():.6g} does not cover "
                f"grid circumradius {grid.circumradius():.6g}; pass mask=True to drop pixels"
            )
        warnings.warn("detector does not cover the grid; outer pixels are masked", stacklevel=2)
    scale = grid.pixel_area / geometry.bin_width
    samples = _kernels.splat(image.values, geometry, grid, scale, backend=backend)
    return Sinogram(samples, geometry, "raw")


def apply_low_dose(sino: Sinogram, incident_counts: float = I0_FULL_DOSE,
                   dose_fraction: float = 0.25, seed: int = 0) -> Sinogram:
    """Pre-log Poisson noise at ``incident_counts * dose_fraction`` photons per ray.

    Samples are drawn from ``numpy.random.Generator(PCG64(seed))``.
    """
    if sino.kind != "raw":
        raise ValueError("low-dose simulation applies to raw sinograms")
    if not incident_counts > 0:
        raise ValueError(f"incident_counts must be positive, got {incident_counts!r}")
    if not 0 < dose_fraction <= 1:
        raise ValueError(f"dose_fraction must lie in (0, 1], got {dose_fraction!r}")
    flux = incident_counts * dose_fraction
    if flux < 1:
        raise ValueError("incident_counts * dose_fraction must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = rng.poisson(flux * np.exp(-sino.samples)).astype(np.float64)
    noisy = -np.log(np.maximum(counts, 1.0) / flux)
    meta = dict(sino.meta, dose_fraction=dose_fraction, incident_counts=incident_counts,
                noise_seed=seed)
    return Sinogram(noisy, sino.geometry, "raw", meta)


def subsample_views(sino: Sinogram, keep) -> Sinogram:
    """Keep every ``keep``-th view (int) or the listed view indices (sequence)."""
    m = sino.geometry.n_views
    if isinstance(keep, (int, np.integer)):
        if keep < 1:
            raise ValueError("keep_every must be >= 1")
        idx = list(range(0, m, int(keep)))
    else:
        idx = sorted(int(i) for i in keep)
        if len(set(idx)) != len(idx) or any(i < 0 or i >= m for i in idx):
            raise ValueError("view indices must be unique and within range")
    if not idx:
        raise ValueError("subsampling would leave no views")
    g = sino.geometry
    angles = tuple(g.angles[i] for i in idx)
    geometry = replace(g, n_views=len(idx), angles=angles)
    if geometry.is_uniform:
        geometry = replace(geometry, angles=None)
    return Sinogram(sino.samples[:, idx], geometry, sino.kind, dict(sino.meta))
