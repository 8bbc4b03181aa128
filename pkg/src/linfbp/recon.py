"""View-by-view backprojection, summation, FBP and the LInFBP forward pass."""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from . import _kernels
from .geometry import Geometry, GridSpec
from .interp import INTERP_KINDS, BasisSet, CoeffTensor, kernel_interpolate
from .projector import ImageGrid, Sinogram
from .spectral import filter_sinogram, make_filter

MATRIX_ENTRY_LIMIT = 10_000_000


class ViewStack:
    """M backprojected view slices, each h x w."""

    def __init__(self, slices):
        slices = np.asarray(slices, dtype=np.float64)
        if slices.ndim != 3 or slices.shape[0] < 1:
            raise ValueError("a view stack needs shape (M, h, w) with M >= 1")
        self.slices = slices

    def __len__(self):
        return self.slices.shape[0]

    def __getitem__(self, m):
        return self.slices[m]


def _single_view(geometry: Geometry, m: int) -> Geometry:
    return Geometry(geometry.n_bins, geometry.bin_width, 1, geometry.angle_span,
                    geometry.detector_center_offset, angles=(geometry.angles[m],))


def backproject_view(filtered_view, grid: GridSpec, geometry: Geometry, m: int,
                     interpolant: str = "linear", backend=None) -> np.ndarray:
    """Slice ``H[i, j] = phi(x_j cos theta_m + y_i sin theta_m)`` for a fixed kernel."""
    if interpolant not in INTERP_KINDS:
        raise ValueError(f"unknown interpolant {interpolant!r}")
    view = np.asarray(filtered_view, dtype=np.float64)
    if view.shape != (geometry.n_bins,):
        raise ValueError(f"view has shape {view.shape}, expected ({geometry.n_bins},)")
    if not 0 <= m < geometry.n_views:
        raise IndexError(f"view index {m} out of range")
    return _kernels.backproject_sum(view[:, None], _single_view(geometry, m), grid,
                                    interpolant, backend=backend)


def backproject_stack(filtered: Sinogram, grid: GridSpec, interpolant: str = "linear",
                      backend=None) -> ViewStack:
    g = filtered.geometry
    return ViewStack([backproject_view(filtered.samples[:, m], grid, g, m, interpolant,
                                       backend=backend) for m in range(g.n_views)])


def sum_views(stack: ViewStack, geometry: Geometry) -> np.ndarray:
    """``(angle_span / M) * sum_m H_m``, accumulated in ascending view order."""
    if len(stack) != geometry.n_views:
        raise ValueError(f"stack has {len(stack)} slices for {geometry.n_views} views")
    acc = np.zeros(stack.slices.shape[1:])
    for m in range(len(stack)):
        acc += stack[m]
    return geometry.view_weight * acc


def backproject(filtered: Sinogram, grid: GridSpec, interpolant: str = "linear",
                backend=None) -> np.ndarray:
    """Unweighted sum of all view slices (the operator behind the dense matrix)."""
    if interpolant not in INTERP_KINDS:
        raise ValueError(f"unknown interpolant {interpolant!r}")
    return _kernels.backproject_sum(filtered.samples, filtered.geometry, grid, interpolant,
                                    backend=backend)


def fbp(sino: Sinogram, grid: GridSpec, filter_kind: str = "ramp",
        interp_kind: str = "linear", backend=None) -> ImageGrid:
    """Filter each view, backproject with a fixed kernel, sum with weight angle_span/M."""
    if sino.kind != "raw":
        raise ValueError("fbp expects a raw sinogram")
    g = sino.geometry
    filtered = filter_sinogram(sino, make_filter(filter_kind, g.n_bins, g.bin_width))
    return KernelBackprojector(interp_kind, backend=backend)(filtered, grid)


def linfbp_forward(filtered: Sinogram, z: CoeffTensor, basis: BasisSet, grid: GridSpec,
                   ensemble: bool = False, fast: bool = True, backend=None) -> ImageGrid:
    """``I[i, j] = (angle_span/M) * sum_{c,m} z[c, n, m] * phi_c(t - n)``, ``n = [t]``.

    ``fast`` switches the hat basis to its two-term evaluation; the Fourier
    basis always sums all C terms.
    """
    if filtered.kind != "filtered":
        raise ValueError("linfbp_forward expects a filtered sinogram")
    g = filtered.geometry
    if z.values.shape != (basis.size, g.n_bins, g.n_views):
        raise ValueError("coefficient tensor does not match basis and geometry")
    raw = _kernels.lcr_backproject(z.values, g, grid, basis.family, basis.k,
                                   ensemble=ensemble, fast=fast, backend=backend)
    return ImageGrid(g.view_weight * raw, grid)


class Backprojector(Protocol):
    """Maps a filtered sinogram onto an image grid.

    Implementations are linear in the sinogram for fixed parameters (for
    LInFBP: for fixed coefficients). Filtering happens before this stage, so
    any filter can be paired with any backprojector.
    """

    def __call__(self, filtered: Sinogram, grid: GridSpec) -> ImageGrid: ...


class KernelBackprojector:
    def __init__(self, kind: str = "linear", backend=None):
        if kind not in INTERP_KINDS:
            raise ValueError(f"unknown interpolant {kind!r}")
        self.kind = kind
        self.backend = backend

    def __call__(self, filtered: Sinogram, grid: GridSpec) -> ImageGrid:
        if filtered.kind != "filtered":
            raise ValueError("backprojectors take filtered sinograms")
        raw = backproject(filtered, grid, self.kind, backend=self.backend)
        return ImageGrid(filtered.geometry.view_weight * raw, grid)


class CoefficientBackprojector:
    """LInFBP with coefficients supplied by ``coeff_fn(filtered) -> C x N x M``."""

    def __init__(self, basis: BasisSet, coeff_fn, ensemble: bool = False, backend=None):
        self.basis = basis
        self.coeff_fn = coeff_fn
        self.ensemble = ensemble
        self.backend = backend

    def __call__(self, filtered: Sinogram, grid: GridSpec) -> ImageGrid:
        z = CoeffTensor(self.coeff_fn(filtered), self.basis, filtered.geometry)
        return linfbp_forward(filtered, z, self.basis, grid, ensemble=self.ensemble,
                              backend=self.backend)


def build_backprojection_matrix(grid: GridSpec, geometry: Geometry,
                                interp_kind: str = "linear") -> np.ndarray:
    """Dense (h*w) x (N*M) matrix of the unweighted fixed-kernel backprojection.

    Built entry by entry from scalar :func:`kernel_interpolate` calls on unit
    impulses, independently of the vectorized kernels. Column ``n * M + m``
    corresponds to sinogram sample ``(n, m)``; row ``i * w + j`` to pixel ``(i, j)``.
    """
    h, w = grid.shape
    n_bins, n_views = geometry.n_bins, geometry.n_views
    if h * w * n_bins * n_views > MATRIX_ENTRY_LIMIT:
        raise ValueError("matrix too large for the dense oracle (limit 1e7 entries)")
    xs, ys = grid.x_coords(), grid.y_coords()
    cos_t, sin_t = geometry.trig()
    mat = np.zeros((h * w, n_bins * n_views))
    for m in range(n_views):
        for i in range(h):
            for j in range(w):
                s = (xs[j] * cos_t[m] + ys[i] * sin_t[m]) / geometry.bin_width \
                    + geometry.center_index
                if not -0.5 <= s <= n_bins - 0.5:
                    continue
                lo = max(math.floor(s) - 1, 0)
                hi = min(math.floor(s) + 2, n_bins - 1)
                for n in range(lo, hi + 1):
                    impulse = np.zeros(n_bins)
                    impulse[n] = 1.0
                    mat[i * w + j, n * n_views + m] += kernel_interpolate(interp_kind, impulse, s)[0]
    return mat
