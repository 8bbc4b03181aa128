import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linfbp.geometry import make_geometry
from linfbp.projector import Sinogram
from linfbp.spectral import (
    FILTER_KINDS,
    circular_filter,
    fft,
    filter_sinogram,
    irfft,
    make_filter,
    next_power_of_two,
    rfft,
)


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def full_response(spec):
    r = spec.response
    return np.concatenate([r, r[-2:0:-1]])


def test_constant_spectrum_is_dc_only():
    spec = rfft(np.full(8, 2.5), 8)
    assert np.allclose(spec, [20.0, 0, 0, 0, 0], atol=1e-14)


def test_impulse_spectrum_is_flat():
    x = np.zeros(8)
    x[0] = 1.0
    assert np.allclose(rfft(x, 8), np.ones(5), atol=1e-15)


def test_rfft_matches_naive_dft_and_roundtrips():
    x = np.random.Generator(np.random.PCG64(0)).standard_normal(64)
    assert np.allclose(rfft(x, 64), naive_dft(x)[:33], atol=1e-12)
    assert np.max(np.abs(irfft(rfft(x, 64), 64) - x)) < 1e-12


def test_complex_fft_matches_naive_dft():
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    assert np.allclose(fft(x), naive_dft(x), atol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 12, 100])
def test_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        rfft(np.zeros(2), n)


def test_rfft_rejects_long_signal():
    with pytest.raises(ValueError):
        rfft(np.zeros(9), 8)


def test_next_power_of_two():
    assert [next_power_of_two(n) for n in (1, 2, 3, 16, 17, 370)] == [1, 2, 4, 16, 32, 512]


@pytest.mark.parametrize("kind", FILTER_KINDS)
def test_response_shape_dc_and_sign(kind):
    spec = make_filter(kind, 95, 0.03)
    assert spec.padded_length == 256
    assert spec.response.shape == (129,)
    assert spec.response[0] == 0.0
    assert np.all(spec.response >= 0.0)
    assert not spec.response.flags.writeable


def test_hann_vanishes_at_nyquist():
    assert make_filter("hann", 16, 1.0).response[-1] == pytest.approx(0.0, abs=1e-18)


def test_ramp_closed_form_and_monotone():
    spec = make_filter("ramp", 8, 1.0)
    f = np.arange(spec.padded_length // 2 + 1)
    assert np.allclose(spec.response, f / (spec.padded_length * 1.0), rtol=0, atol=1e-16)
    assert np.all(np.diff(spec.response) >= 0)
    assert spec.response[-1] == pytest.approx(1 / (2 * 1.0))


def test_window_closed_forms():
    ramp = make_filter("ramp", 20, 0.5).response
    cos = make_filter("cosine", 20, 0.5).response
    hann = make_filter("hann", 20, 0.5).response
    L = 64
    f = np.arange(L // 2 + 1)
    assert np.allclose(cos, ramp * np.cos(np.pi * f / L), atol=1e-15)
    assert np.allclose(hann, ramp * 0.5 * (1 + np.cos(2 * np.pi * f / L)), atol=1e-15)


def test_filter_labels():
    assert [make_filter(k, 4).label for k in FILTER_KINDS] == ["R", "C", "H"]


def test_unknown_filter_rejected():
    with pytest.raises(ValueError):
        make_filter("shepp", 8)


def test_constant_sinogram_filters_to_almost_zero_dc():
    g = make_geometry(16, 1.0, 3)
    spec = make_filter("ramp", 16, 1.0)
    # zero padding makes a finite constant non-DC; the padded circle's DC is removed
    padded = np.full(spec.padded_length, 3.0)
    assert np.max(np.abs(circular_filter(padded, spec))) < 1e-12
    out = filter_sinogram(Sinogram(np.full((16, 3), 3.0), g), spec)
    assert out.kind == "filtered"


def test_sinusoid_is_eigenvector():
    spec = make_filter("hann", 16, 0.5)
    L = spec.padded_length
    n = np.arange(L)
    for f in (1, 5, L // 4):
        x = np.cos(2 * np.pi * f * n / L + 0.3)
        assert np.allclose(circular_filter(x, spec), spec.response[f] * x, atol=1e-12)


def test_impulse_matches_direct_circular_convolution():
    n_bins = 16
    spec = make_filter("ramp", n_bins, 1.0)
    L = spec.padded_length
    kernel = (naive_dft(full_response(spec)).conj() / L).real  # inverse DFT of the response
    view = np.zeros(n_bins)
    view[5] = 1.0
    padded = np.zeros(L)
    padded[:n_bins] = view
    direct = np.array([sum(padded[j] * kernel[(i - j) % L] for j in range(L)) for i in range(L)])
    g = make_geometry(n_bins, 1.0, 1)
    out = filter_sinogram(Sinogram(view[:, None], g), spec).samples[:, 0]
    assert np.max(np.abs(out - direct[:n_bins])) < 1e-10


def test_filter_rejects_mismatched_geometry():
    g = make_geometry(16, 1.0, 2)
    raw = Sinogram(np.zeros((16, 2)), g)
    with pytest.raises(ValueError):
        filter_sinogram(raw, make_filter("ramp", 17, 1.0))
    with pytest.raises(ValueError):
        filter_sinogram(raw, make_filter("ramp", 16, 0.5))
    filtered = filter_sinogram(raw, make_filter("ramp", 16, 1.0))
    with pytest.raises(ValueError):
        filter_sinogram(filtered, make_filter("ramp", 16, 1.0))


sino_values = arrays(np.float64, (12, 5), elements=st.floats(-100, 100))


@settings(max_examples=50, deadline=None)
@given(sino_values, sino_values)
def test_filter_is_linear(a, b):
    g = make_geometry(12, 0.7, 5)
    spec = make_filter("cosine", 12, 0.7)
    fa = filter_sinogram(Sinogram(a, g), spec).samples
    fb = filter_sinogram(Sinogram(b, g), spec).samples
    fab = filter_sinogram(Sinogram(a + b, g), spec).samples
    assert np.allclose(fab, fa + fb, rtol=0, atol=1e-12 * (1 + np.abs(a).max() + np.abs(b).max()))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 32, elements=st.floats(-10, 10)), st.integers(0, 31))
def test_circular_shift_covariance(x, shift):
    spec = make_filter("ramp", 16, 1.0)
    a = circular_filter(np.roll(x, shift), spec)
    b = np.roll(circular_filter(x, spec), shift)
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(sino_values, st.permutations(range(5)))
def test_views_are_independent(a, perm):
    g = make_geometry(12, 0.7, 5)
    spec = make_filter("hann", 12, 0.7)
    out = filter_sinogram(Sinogram(a, g), spec).samples
    out_perm = filter_sinogram(Sinogram(a[:, list(perm)], g), spec).samples
    assert np.array_equal(out_perm, out[:, list(perm)])
