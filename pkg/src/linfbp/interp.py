"""Fixed interpolation kernels and the learnable local continuous representation.

The learnable interpolant of one view is piecewise: around detector cell
``n = [t]`` the value at fractional index ``t`` is

    sum_c z[c, n] * phi_c(t - n)

with ``phi_c`` a fixed basis (Fourier harmonics or hat functions) and ``z``
predicted by the coefficient network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import Geometry, round_half_away

INTERP_KINDS = ("nearest", "linear", "cubic")
BASIS_FAMILIES = ("fourier", "linear")


@dataclass(frozen=True)
class BasisSet:
    """``2k + 1`` basis functions on [-1, 1].

    fourier: ``[1, sin 2u, cos 2u, sin 4u, cos 4u, ..., sin 2ku, cos 2ku]``.
    linear:  hats ``max(1 - |k u - (c - k - 1)|, 0)`` for ``c = 1..2k+1``,
    anchored at ``u = -1, -(k-1)/k, ..., 1``.
    """

    family: str
    k: int

    def __post_init__(self):
        if self.family not in BASIS_FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def size(self) -> int:
        return 2 * self.k + 1

    @property
    def code(self) -> int:
        return _kernels.FAMILY_CODES[self.family]

    def evaluate(self, u) -> np.ndarray:
        """All basis values at ``u``; shape ``(C,) + u.shape``."""
        return _kernels.basis_matrix(self.code, self.k, self.size, u)


def default_basis(family: str) -> BasisSet:
    """Defaults: 3 Fourier functions (k=1) or 5 hat functions (k=2)."""
    return BasisSet(family, 1 if family == "fourier" else 2)


@dataclass(frozen=True)
class CoeffTensor:
    """LCR weights ``z`` of shape C x N x M."""

    values: np.ndarray
    basis: BasisSet
    geometry: Geometry

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expected = (self.basis.size, self.geometry.n_bins, self.geometry.n_views)
        if values.shape != expected:
            raise ValueError(f"coefficient shape {values.shape} != expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficients contain non-finite values")
        object.__setattr__(self, "values", values)


def kernel_interpolate(kind: str, samples, t):
    """Sample a fixed interpolant of ``samples`` at fractional index ``t``.

    Returns ``(value, in_support)``. ``t`` outside ``[-0.5, N - 0.5]`` gives 0.
    Neighbour indices past either end are clamped to the edge sample; the cubic
    kernel is Keys' with ``a = -0.5``.
    """
    if kind not in INTERP_KINDS:
        raise ValueError(f"unknown interpolation kind {kind!r}")
    samples = np.asarray(samples, dtype=np.float64)
    n_bins = samples.shape[0]
    t = float(t)
    if not -0.5 <= t <= n_bins - 0.5:
        return 0.0, False
    clamp = lambda i: min(max(i, 0), n_bins - 1)  # noqa: E731
    if kind == "nearest":
        return float(samples[clamp(int(round_half_away(t)))]), True
    i0 = math.floor(t)
    f = t - i0
    if kind == "linear":
        return float(samples[clamp(i0)] * (1.0 - f) + samples[clamp(i0 + 1)] * f), True
    value = 0.0
    for tap in range(-1, 3):
        value += samples[clamp(i0 + tap)] * keys_weight(f - tap)
    return float(value), True


def keys_weight(d: float, a: float = -0.5) -> float:
    d = abs(d)
    if d <= 1.0:
        return (a + 2.0) * d ** 3 - (a + 3.0) * d ** 2 + 1.0
    if d < 2.0:
        return a * d ** 3 - 5.0 * a * d ** 2 + 8.0 * a * d - 4.0 * a
    return 0.0


def eval_basis(basis: BasisSet, c: int, u: float) -> float:
    """Closed-form value of basis function ``c`` (1-based, as in ``1..C``) at ``u``."""
    if not 1 <= c <= basis.size:
        raise ValueError(f"basis index {c} out of range 1..{basis.size}")
    k = basis.k
    if basis.family == "linear":
        return max(1.0 - abs(k * u - (c - k - 1)), 0.0)
    if c == 1:
        return math.cos(0.0 * u)
    freq = 2 * (c // 2)
    return math.sin(freq * u) if c % 2 == 0 else math.cos(freq * u)


def _view_cell(z_view, basis, n, u):
    return sum(z_view[c, n] * eval_basis(basis, c + 1, u) for c in range(basis.size))


def lcr_eval(z_view, basis: BasisSet, t, ensemble: bool = False):
    """Evaluate the learned interpolant of one view at fractional index ``t``.

    ``z_view`` is C x N. Returns ``(value, in_support)``. Without ensemble the
    cell is ``n = [t]`` (round half away from zero, clamped to the detector)
    and the offset ``u = t - n`` lies in [-0.5, 0.5]. With ``ensemble=True``
    the cells at ``floor(t)`` and ``floor(t) + 1`` are both evaluated and
    blended with weights ``(1 - frac, frac)``; each offset is measured from
    its (edge-clamped) cell.
    """
    z_view = np.asarray(z_view, dtype=np.float64)
    n_bins = z_view.shape[1]
    t = float(t)
    if not -0.5 <= t <= n_bins - 0.5:
        return 0.0, False
    clamp = lambda i: min(max(i, 0), n_bins - 1)  # noqa: E731
    if ensemble:
        n0 = math.floor(t)
        f = t - n0
        a, b = clamp(n0), clamp(n0 + 1)
        v0 = _view_cell(z_view, basis, a, t - a)
        v1 = _view_cell(z_view, basis, b, t - b)
        return float((1.0 - f) * v0 + f * v1), True
    n = clamp(int(round_half_away(t)))
    return float(_view_cell(z_view, basis, n, t - n)), True


def lcr_eval_linear_fast(z_view, k: int, t):
    """Two-term evaluation of the hat-basis interpolant.

    Only the hats anchored at ``floor(k u)/k`` and ``ceil(k u)/k`` are nonzero,
    with weights ``ceil(k u) - k u`` and ``k u - floor(k u)``.
    """
    z_view = np.asarray(z_view, dtype=np.float64)
    n_bins = z_view.shape[1]
    t = float(t)
    if not -0.5 <= t <= n_bins - 0.5:
        return 0.0, False
    n = min(max(int(round_half_away(t)), 0), n_bins - 1)
    ku = k * (t - n)
    lo, hi = math.floor(ku), math.ceil(ku)
    if lo == hi:
        return float(z_view[lo + k, n]), True
    return float(z_view[lo + k, n] * (hi - ku) + z_view[lo + k + 1, n] * (ku - lo)), True


def reduction_coefficients(samples, k: int) -> np.ndarray:
    """Hat-basis coefficients that reproduce linear interpolation exactly.

    ``samples`` is N or N x M. Anchor ``c`` of cell ``n`` sits at fractional
    index ``n + (c - k - 1)/k``; its weight is the linearly interpolated sample
    there, edge-clamped. For ``k = 1`` these are the shifted copies
    ``z[c, n] = samples[n + c - 2]``.
    """
    samples = np.asarray(samples, dtype=np.float64)
    squeeze = samples.ndim == 1
    if squeeze:
        samples = samples[:, None]
    n_bins = samples.shape[0]
    z = np.empty((2 * k + 1,) + samples.shape)
    n = np.arange(n_bins, dtype=np.float64)
    for c in range(2 * k + 1):
        pos = n + (c - k) / k
        i0 = np.floor(pos)
        f = (pos - i0)[:, None]
        lo = np.clip(i0.astype(np.int64), 0, n_bins - 1)
        hi = np.clip(i0.astype(np.int64) + 1, 0, n_bins - 1)
        z[c] = samples[lo] * (1.0 - f) + samples[hi] * f
    return z[:, :, 0] if squeeze else z
