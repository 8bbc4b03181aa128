"""Frequency-domain sinogram filtering on top of an iterative radix-2 FFT."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projector import Sinogram

FILTER_KINDS = ("ramp", "cosine", "hann")
FILTER_LABELS = {"ramp": "R", "cosine": "C", "hann": "H"}


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x, inverse: bool = False) -> np.ndarray:
    """Unnormalized complex DFT along the last axis (length must be a power of two).

    ``inverse=True`` flips the twiddle sign but does not divide by n.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)]
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return a


def rfft(signal, n: int) -> np.ndarray:
    """Half spectrum (n//2 + 1 bins) of ``signal`` zero-padded to ``n``."""
    signal = np.asarray(signal, dtype=np.float64)
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n}")
    if signal.shape[-1] > n:
        raise ValueError(f"signal length {signal.shape[-1]} exceeds n={n}")
    pad = [(0, 0)] * (signal.ndim - 1) + [(0, n - signal.shape[-1])]
    return fft(np.pad(signal, pad))[..., : n // 2 + 1]


def irfft(spectrum, n: int) -> np.ndarray:
    """Inverse of :func:`rfft`, scaled by 1/n; returns length-n real signals."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n}")
    if spectrum.shape[-1] != n // 2 + 1:
        raise ValueError(f"expected {n // 2 + 1} bins, got {spectrum.shape[-1]}")
    full = np.concatenate([spectrum, np.conj(spectrum[..., -2:0:-1])], axis=-1)
    return fft(full, inverse=True).real / n


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    n_bins: int
    bin_width: float
    padded_length: int
    response: np.ndarray

    @property
    def label(self) -> str:
        return FILTER_LABELS[self.kind]


def make_filter(kind: str, n_bins: int, bin_width: float = 1.0) -> FilterSpec:
    """Ramp-family frequency response on the padded grid.

    ``response[f] = f / (L * bin_width)`` is |omega| in cycles per unit length,
    peaking at 1/(2 * bin_width) at Nyquist. Cosine and Hann multiply by their
    windows. ``L`` is the next power of two >= 2 * n_bins.
    """
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    length = next_power_of_two(2 * n_bins)
    f = np.arange(length // 2 + 1, dtype=np.float64)
    response = f / (length * bin_width)
    if kind == "cosine":
        response = response * np.cos(np.pi * f / length)
    elif kind == "hann":
        response = response * 0.5 * (1.0 + np.cos(2.0 * np.pi * f / length))
    response = np.maximum(response, 0.0)
    response.setflags(write=False)
    return FilterSpec(kind, int(n_bins), float(bin_width), length, response)


def circular_filter(padded, spec: FilterSpec) -> np.ndarray:
    """Apply the response to signals already of length ``padded_length`` (circularly)."""
    return irfft(rfft(padded, spec.padded_length) * spec.response, spec.padded_length)


def filter_sinogram(sino: Sinogram, spec: FilterSpec) -> Sinogram:
    """Filter every view independently: zero-pad, multiply spectrum, truncate."""
    if sino.kind != "raw":
        raise ValueError("filter_sinogram expects a raw sinogram")
    if sino.geometry.n_bins != spec.n_bins:
        raise ValueError(
            f"filter built for {spec.n_bins} bins, sinogram has {sino.geometry.n_bins}"
        )
    if not np.isclose(sino.geometry.bin_width, spec.bin_width, rtol=1e-12, atol=0.0):
        raise ValueError("filter bin_width does not match the sinogram geometry")
    views = sino.samples.T  # M x N
    out = irfft(rfft(views, spec.padded_length) * spec.response, spec.padded_length)
    meta = dict(sino.meta, filter=spec.kind)
    return Sinogram(np.ascontiguousarray(out[:, : spec.n_bins].T), sino.geometry, "filtered", meta)
