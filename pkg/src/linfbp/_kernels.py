"""Hot pixel x view loops: backprojection, splatting, LCR gather and scatter.

Each operation has a ``_nb`` loop kernel (compiled with numba when the backend
allows) and a ``_np`` vectorized twin. The public wrappers at the bottom pick
one according to :data:`linfbp._accel.USE_NUMBA` unless ``backend`` is given.

Conventions shared by both twins:

* sinograms are passed transposed (views x bins, C-contiguous);
* a pixel's fractional bin index is ``(x*cos + y*sin) / bin_width + center``;
* indices outside ``[-0.5, N - 0.5]`` contribute nothing;
* per pixel, views are accumulated in ascending order.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit

NEAREST, LINEAR, CUBIC = 0, 1, 2
FOURIER_FAMILY, LINEAR_FAMILY = 0, 1
KERNEL_CODES = {"nearest": NEAREST, "linear": LINEAR, "cubic": CUBIC}
FAMILY_CODES = {"fourier": FOURIER_FAMILY, "linear": LINEAR_FAMILY}

KEYS_A = -0.5


# ---------------------------------------------------------------------------
# scalar helpers (shared by the loop kernels)
# ---------------------------------------------------------------------------


@njit
def _round_half_away(s):
    if s >= 0.0:
        return int(math.floor(s + 0.5))
    return -int(math.floor(-s + 0.5))


@njit
def _clamp(n, size):
    if n < 0:
        return 0
    if n > size - 1:
        return size - 1
    return n


@njit
def _keys(d):
    d = abs(d)
    if d <= 1.0:
        return ((KEYS_A + 2.0) * d - (KEYS_A + 3.0)) * d * d + 1.0
    if d < 2.0:
        return ((KEYS_A * d - 5.0 * KEYS_A) * d + 8.0 * KEYS_A) * d - 4.0 * KEYS_A
    return 0.0


@njit
def _sample(view, s, kind):
    n_bins = view.shape[0]
    if s < -0.5 or s > n_bins - 0.5:
        return 0.0
    if kind == NEAREST:
        return view[_clamp(_round_half_away(s), n_bins)]
    fl = math.floor(s)
    i0 = int(fl)
    f = s - fl
    if kind == LINEAR:
        return view[_clamp(i0, n_bins)] * (1.0 - f) + view[_clamp(i0 + 1, n_bins)] * f
    acc = 0.0
    for tap in range(-1, 3):
        acc += view[_clamp(i0 + tap, n_bins)] * _keys(f - tap)
    return acc


@njit
def _basis_value(family, k, c, u):
    """Basis function ``c`` (0-based) at offset ``u``."""
    if family == LINEAR_FAMILY:
        v = 1.0 - abs(k * u - (c - k))
        return v if v > 0.0 else 0.0
    if c == 0:
        return 1.0
    freq = 2.0 * ((c + 1) // 2)
    if c % 2 == 1:
        return math.sin(freq * u)
    return math.cos(freq * u)


@njit
def _cell_full(zcell, family, k, u):
    acc = 0.0
    for c in range(zcell.shape[0]):
        acc += zcell[c] * _basis_value(family, k, c, u)
    return acc


@njit
def _cell_linear_fast(zcell, k, u):
    ku = k * u
    lo = math.floor(ku)
    hi = math.ceil(ku)
    c_lo = int(lo) + k
    if lo == hi:
        return zcell[c_lo]
    return zcell[c_lo] * (hi - ku) + zcell[c_lo + 1] * (ku - lo)


@njit
def _cell(zcell, family, k, u, fast):
    if fast and family == LINEAR_FAMILY:
        return _cell_linear_fast(zcell, k, u)
    return _cell_full(zcell, family, k, u)


# ---------------------------------------------------------------------------
# fixed-kernel backprojection
# ---------------------------------------------------------------------------


@njit
def _backproject_nb(qt, cos_t, sin_t, xs, ys, bin_width, center, kind):
    # View-outer order still adds each pixel's views in ascending order. The
    # kernel branch is hoisted out of the pixel loop so each variant vectorizes.
    out = np.zeros((ys.shape[0], xs.shape[0]))
    n_bins = qt.shape[1]
    hi = n_bins - 0.5
    for m in range(qt.shape[0]):
        c, sn, view = cos_t[m], sin_t[m], qt[m]
        for i in range(ys.shape[0]):
            ysn = ys[i] * sn
            row = out[i]
            if kind == NEAREST:
                for j in range(xs.shape[0]):
                    s = (xs[j] * c + ysn) / bin_width + center
                    if s >= -0.5 and s <= hi:
                        row[j] += view[_clamp(_round_half_away(s), n_bins)]
            elif kind == LINEAR:
                for j in range(xs.shape[0]):
                    s = (xs[j] * c + ysn) / bin_width + center
                    if s >= -0.5 and s <= hi:
                        fl = math.floor(s)
                        i0 = int(fl)
                        f = s - fl
                        row[j] += (view[_clamp(i0, n_bins)] * (1.0 - f)
                                   + view[_clamp(i0 + 1, n_bins)] * f)
            else:
                for j in range(xs.shape[0]):
                    s = (xs[j] * c + ysn) / bin_width + center
                    row[j] += _sample(view, s, kind)
    return out


def _fractional(xs, ys, c, s, bin_width, center):
    return (xs[None, :] * c + ys[:, None] * s) / bin_width + center


def _sample_np(view, s, kind):
    n_bins = view.shape[0]
    mask = (s >= -0.5) & (s <= n_bins - 0.5)
    if kind == NEAREST:
        n = np.sign(s) * np.floor(np.abs(s) + 0.5)
        vals = view[np.clip(n, 0, n_bins - 1).astype(np.int64)]
    else:
        i0f = np.floor(s)
        f = s - i0f
        i0 = i0f.astype(np.int64)
        if kind == LINEAR:
            vals = (view[np.clip(i0, 0, n_bins - 1)] * (1.0 - f)
                    + view[np.clip(i0 + 1, 0, n_bins - 1)] * f)
        else:
            vals = np.zeros_like(s)
            for tap in range(-1, 3):
                d = np.abs(f - tap)
                w = np.where(
                    d <= 1.0,
                    ((KEYS_A + 2.0) * d - (KEYS_A + 3.0)) * d * d + 1.0,
                    np.where(d < 2.0,
                             ((KEYS_A * d - 5.0 * KEYS_A) * d + 8.0 * KEYS_A) * d - 4.0 * KEYS_A,
                             0.0),
                )
                vals = vals + view[np.clip(i0 + tap, 0, n_bins - 1)] * w
    return np.where(mask, vals, 0.0)


def _backproject_np(qt, cos_t, sin_t, xs, ys, bin_width, center, kind):
    out = np.zeros((ys.shape[0], xs.shape[0]))
    for m in range(qt.shape[0]):
        s = _fractional(xs, ys, cos_t[m], sin_t[m], bin_width, center)
        out += _sample_np(qt[m], s, kind)
    return out


# ---------------------------------------------------------------------------
# pixel-driven splat (adjoint of linear backprojection)
# ---------------------------------------------------------------------------


@njit
def _splat_nb(img, cos_t, sin_t, xs, ys, bin_width, center, n_bins, scale):
    n_views = cos_t.shape[0]
    out = np.zeros((n_views, n_bins))
    for m in range(n_views):
        for i in range(ys.shape[0]):
            for j in range(xs.shape[0]):
                s = (xs[j] * cos_t[m] + ys[i] * sin_t[m]) / bin_width + center
                if s < -0.5 or s > n_bins - 0.5:
                    continue
                i0 = int(math.floor(s))
                f = s - i0
                v = img[i, j] * scale
                out[m, _clamp(i0, n_bins)] += v * (1.0 - f)
                out[m, _clamp(i0 + 1, n_bins)] += v * f
    return out


def _splat_np(img, cos_t, sin_t, xs, ys, bin_width, center, n_bins, scale):
    out = np.zeros((cos_t.shape[0], n_bins))
    flat = img.ravel() * scale
    for m in range(cos_t.shape[0]):
        s = _fractional(xs, ys, cos_t[m], sin_t[m], bin_width, center).ravel()
        mask = (s >= -0.5) & (s <= n_bins - 0.5)
        s, v = s[mask], flat[mask]
        i0f = np.floor(s)
        f = s - i0f
        i0 = i0f.astype(np.int64)
        out[m] += np.bincount(np.clip(i0, 0, n_bins - 1), v * (1.0 - f), minlength=n_bins)
        out[m] += np.bincount(np.clip(i0 + 1, 0, n_bins - 1), v * f, minlength=n_bins)
    return out


# ---------------------------------------------------------------------------
# LCR gather (LInFBP forward) and scatter (its transpose)
# ---------------------------------------------------------------------------


@njit
def _lcr_forward_nb(zt, cos_t, sin_t, xs, ys, bin_width, center, family, k, ensemble, fast):
    n_views, n_bins = zt.shape[0], zt.shape[1]
    out = np.zeros((ys.shape[0], xs.shape[0]))
    for i in range(ys.shape[0]):
        for j in range(xs.shape[0]):
            acc = 0.0
            for m in range(n_views):
                s = (xs[j] * cos_t[m] + ys[i] * sin_t[m]) / bin_width + center
                if s < -0.5 or s > n_bins - 0.5:
                    continue
                if ensemble:
                    n0 = int(math.floor(s))
                    f = s - n0
                    a = _clamp(n0, n_bins)
                    b = _clamp(n0 + 1, n_bins)
                    v0 = _cell(zt[m, a], family, k, s - a, fast)
                    v1 = _cell(zt[m, b], family, k, s - b, fast)
                    acc += (1.0 - f) * v0 + f * v1
                else:
                    n = _clamp(_round_half_away(s), n_bins)
                    acc += _cell(zt[m, n], family, k, s - n, fast)
            out[i, j] = acc
    return out


@njit
def _lcr_scatter_nb(g, cos_t, sin_t, xs, ys, bin_width, center, n_bins, n_basis,
                    family, k, ensemble):
    n_views = cos_t.shape[0]
    out = np.zeros((n_views, n_bins, n_basis))
    for i in range(ys.shape[0]):
        for j in range(xs.shape[0]):
            gij = g[i, j]
            if gij == 0.0:
                continue
            for m in range(n_views):
                s = (xs[j] * cos_t[m] + ys[i] * sin_t[m]) / bin_width + center
                if s < -0.5 or s > n_bins - 0.5:
                    continue
                if ensemble:
                    n0 = int(math.floor(s))
                    f = s - n0
                    a = _clamp(n0, n_bins)
                    b = _clamp(n0 + 1, n_bins)
                    for c in range(n_basis):
                        out[m, a, c] += gij * (1.0 - f) * _basis_value(family, k, c, s - a)
                        out[m, b, c] += gij * f * _basis_value(family, k, c, s - b)
                else:
                    n = _clamp(_round_half_away(s), n_bins)
                    u = s - n
                    for c in range(n_basis):
                        out[m, n, c] += gij * _basis_value(family, k, c, u)
    return out


def basis_matrix(family, k, n_basis, u):
    """Stack of basis values, shape ``(n_basis,) + u.shape``."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty((n_basis,) + u.shape)
    for c in range(n_basis):
        if family == LINEAR_FAMILY:
            out[c] = np.maximum(1.0 - np.abs(k * u - (c - k)), 0.0)
        elif c == 0:
            out[c] = 1.0
        elif c % 2 == 1:
            out[c] = np.sin(2.0 * ((c + 1) // 2) * u)
        else:
            out[c] = np.cos(2.0 * ((c + 1) // 2) * u)
    return out


def _anchors_np(s, n_bins, ensemble):
    """Yield (index, offset, weight) triples for each anchor of each sample."""
    if ensemble:
        n0f = np.floor(s)
        f = s - n0f
        n0 = n0f.astype(np.int64)
        a = np.clip(n0, 0, n_bins - 1)
        b = np.clip(n0 + 1, 0, n_bins - 1)
        # offsets are taken from the clamped cell so edge cells stay on their own side
        return [(a, s - a, 1.0 - f), (b, s - b, f)]
    n = np.clip(np.sign(s) * np.floor(np.abs(s) + 0.5), 0, n_bins - 1)
    return [(n.astype(np.int64), s - n, None)]


def _cell_linear_fast_np(zcells, k, u):
    ku = k * u
    lo = np.floor(ku)
    hi = np.ceil(ku)
    c_lo = lo.astype(np.int64) + k
    c_hi = hi.astype(np.int64) + k
    z_lo = np.take_along_axis(zcells, c_lo[..., None], axis=-1)[..., 0]
    z_hi = np.take_along_axis(zcells, c_hi[..., None], axis=-1)[..., 0]
    return np.where(lo == hi, z_lo, z_lo * (hi - ku) + z_hi * (ku - lo))


def _lcr_forward_np(zt, cos_t, sin_t, xs, ys, bin_width, center, family, k, ensemble, fast):
    n_views, n_bins, n_basis = zt.shape
    out = np.zeros((ys.shape[0], xs.shape[0]))
    for m in range(n_views):
        s = _fractional(xs, ys, cos_t[m], sin_t[m], bin_width, center)
        mask = (s >= -0.5) & (s <= n_bins - 0.5)
        val = np.zeros_like(s)
        for n, u, w in _anchors_np(s, n_bins, ensemble):
            zcells = zt[m][n]  # h x w x C
            if fast and family == LINEAR_FAMILY:
                v = _cell_linear_fast_np(zcells, k, u)
            else:
                v = np.einsum("ijc,cij->ij", zcells, basis_matrix(family, k, n_basis, u))
            val = val + (v if w is None else w * v)
        out += np.where(mask, val, 0.0)
    return out


def _lcr_scatter_np(g, cos_t, sin_t, xs, ys, bin_width, center, n_bins, n_basis,
                    family, k, ensemble):
    n_views = cos_t.shape[0]
    out = np.zeros((n_views, n_bins, n_basis))
    gflat = g.ravel()
    for m in range(n_views):
        s = _fractional(xs, ys, cos_t[m], sin_t[m], bin_width, center).ravel()
        mask = (s >= -0.5) & (s <= n_bins - 0.5)
        s, gm = s[mask], gflat[mask]
        for n, u, w in _anchors_np(s, n_bins, ensemble):
            gw = gm if w is None else gm * w
            phi = basis_matrix(family, k, n_basis, u)
            idx = n[None, :] * n_basis + np.arange(n_basis)[:, None]
            out[m] += np.bincount(idx.ravel(), (phi * gw[None, :]).ravel(),
                                  minlength=n_bins * n_basis).reshape(n_bins, n_basis)
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _use_numba(backend):
    if backend is None:
        return _accel.USE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba" and _accel.NUMBA_AVAILABLE


def _trig(geometry):
    return geometry.trig()


def backproject_sum(q, geometry, grid, kind, backend=None):
    """Unweighted sum over views of fixed-kernel view slices. ``q`` is N x M."""
    qt = np.ascontiguousarray(np.asarray(q, dtype=np.float64).T)
    c, s = _trig(geometry)
    fn = _backproject_nb if _use_numba(backend) else _backproject_np
    return fn(qt, c, s, grid.x_coords(), grid.y_coords(), float(geometry.bin_width),
              float(geometry.center_index), KERNEL_CODES[kind])


def splat(img, geometry, grid, scale, backend=None):
    """Pixel-driven linear splat; returns an N x M sinogram."""
    c, s = _trig(geometry)
    fn = _splat_nb if _use_numba(backend) else _splat_np
    out = fn(np.ascontiguousarray(img, dtype=np.float64), c, s, grid.x_coords(),
             grid.y_coords(), float(geometry.bin_width), float(geometry.center_index),
             geometry.n_bins, float(scale))
    return np.ascontiguousarray(out.T)


def lcr_backproject(z, geometry, grid, family, k, ensemble=False, fast=True, backend=None):
    """Unweighted sum over views of LCR samples. ``z`` is C x N x M."""
    zt = np.ascontiguousarray(np.transpose(np.asarray(z, dtype=np.float64), (2, 1, 0)))
    c, s = _trig(geometry)
    fn = _lcr_forward_nb if _use_numba(backend) else _lcr_forward_np
    return fn(zt, c, s, grid.x_coords(), grid.y_coords(), float(geometry.bin_width),
              float(geometry.center_index), FAMILY_CODES[family], int(k), bool(ensemble),
              bool(fast))


def lcr_scatter(g, geometry, grid, family, k, n_basis, ensemble=False, backend=None):
    """Transpose of :func:`lcr_backproject`; returns C x N x M."""
    c, s = _trig(geometry)
    fn = _lcr_scatter_nb if _use_numba(backend) else _lcr_scatter_np
    out = fn(np.ascontiguousarray(g, dtype=np.float64), c, s, grid.x_coords(),
             grid.y_coords(), float(geometry.bin_width), float(geometry.center_index),
             geometry.n_bins, int(n_basis), FAMILY_CODES[family], int(k), bool(ensemble))
    return np.ascontiguousarray(np.transpose(out, (2, 1, 0)))
