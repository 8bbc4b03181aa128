import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linfbp.geometry import Geometry, GridSpec, fitted_geometry, make_geometry
from linfbp.projector import (
    ImageGrid,
    Sinogram,
    apply_low_dose,
    forward_project,
    subsample_views,
)
from linfbp.recon import backproject, build_backprojection_matrix


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def test_zero_image_projects_to_zero():
    grid = GridSpec(8, 8, 0.25)
    s = forward_project(ImageGrid(np.zeros(grid.shape), grid), fitted_geometry(grid, 9))
    assert not s.samples.any()


def test_unit_pixel_mass_conserved_per_view():
    grid = GridSpec(1, 1, 0.5)
    g = make_geometry(5, 0.3, 11)
    s = forward_project(ImageGrid(np.ones((1, 1)), grid), g).samples
    assert np.allclose(s.sum(axis=0), grid.pixel_area / g.bin_width, rtol=1e-14)
    assert np.all((s > 0).sum(axis=0) <= 2)


def test_forward_equals_dense_matrix_product():
    grid = GridSpec(8, 8, 1.0)
    g = fitted_geometry(grid, 12)
    x = rng(1).standard_normal(grid.shape)
    mat = build_backprojection_matrix(grid, g, "linear")
    expected = (grid.pixel_area / g.bin_width) * (mat.T @ x.ravel())
    got = forward_project(ImageGrid(x, grid), g).samples.ravel()
    assert np.max(np.abs(got - expected)) < 1e-10


def test_adjoint_identity():
    grid = GridSpec(24, 20, 0.1)
    g = fitted_geometry(grid, 17)
    x = rng(2).standard_normal(grid.shape)
    y = rng(3).standard_normal((g.n_bins, g.n_views))
    lhs = np.vdot(forward_project(ImageGrid(x, grid), g).samples, y)
    bp = backproject(Sinogram(y, g, "filtered"), grid, "linear")
    rhs = grid.pixel_area / g.bin_width * np.vdot(x, bp)
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


pixel_values = st.one_of(st.just(0.0), st.floats(1e-3, 50), st.floats(-50, -1e-3))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=pixel_values), st.sampled_from([0.0, 0.5, 2.0, -4.0]))
def test_forward_is_homogeneous(x, alpha):
    # bitwise equality needs a power-of-two factor and no subnormal products
    grid = GridSpec(6, 6, 0.2)
    g = fitted_geometry(grid, 7)
    a = forward_project(ImageGrid(alpha * x, grid), g).samples
    b = forward_project(ImageGrid(x, grid), g).samples
    assert np.array_equal(a, alpha * b)


def test_uncovered_grid_rejected_or_masked():
    grid = GridSpec(16, 16, 1.0)
    g = make_geometry(5, 1.0, 4)
    img = ImageGrid(np.ones(grid.shape), grid)
    with pytest.raises(ValueError):
        forward_project(img, g)
    with pytest.warns(UserWarning):
        s = forward_project(img, g, mask=True)
    assert s.shape == (5, 4)


def test_sinogram_validates_shape_and_values():
    g = make_geometry(4, 1.0, 3)
    with pytest.raises(ValueError):
        Sinogram(np.zeros((3, 4)), g)
    bad = np.zeros((4, 3))
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        Sinogram(bad, g)
    with pytest.raises(ValueError):
        Sinogram(np.zeros((4, 3)), g, kind="log")


def test_low_dose_noiseless_limit():
    g = make_geometry(31, 0.1, 20)
    p = rng(4).uniform(0, 3, (31, 20))
    out = apply_low_dose(Sinogram(p, g), incident_counts=1e12, dose_fraction=1.0, seed=0)
    assert np.max(np.abs(out.samples - p)) < 1e-4
    assert out.geometry == g and out.shape == p.shape


def test_low_dose_zero_projection_is_unbiased():
    g = make_geometry(100, 1.0, 100)
    out = apply_low_dose(Sinogram(np.zeros((100, 100)), g), 1e6, 1.0, seed=7).samples
    sigma = out.std(ddof=1) / math.sqrt(out.size)
    assert abs(out.mean()) < 3 * sigma


def test_low_dose_is_deterministic():
    g = make_geometry(16, 1.0, 8)
    s = Sinogram(rng(5).uniform(0, 2, (16, 8)), g)
    a = apply_low_dose(s, seed=3).samples
    assert np.array_equal(a, apply_low_dose(s, seed=3).samples)
    assert not np.array_equal(a, apply_low_dose(s, seed=4).samples)


@pytest.mark.parametrize("kwargs", [
    {"incident_counts": 0.0},
    {"incident_counts": -1.0},
    {"dose_fraction": 0.0},
    {"dose_fraction": 1.5},
    {"incident_counts": 2.0, "dose_fraction": 0.25},
])
def test_low_dose_rejects_bad_parameters(kwargs):
    s = Sinogram(np.zeros((4, 2)), make_geometry(4, 1.0, 2))
    with pytest.raises(ValueError):
        apply_low_dose(s, **kwargs)


def test_low_dose_rejects_filtered_input():
    s = Sinogram(np.zeros((4, 2)), make_geometry(4, 1.0, 2), "filtered")
    with pytest.raises(ValueError):
        apply_low_dose(s)


def test_subsample_keep_one_is_identity():
    g = make_geometry(8, 1.0, 12)
    s = Sinogram(rng(6).standard_normal((8, 12)), g)
    out = subsample_views(s, 1)
    assert out.geometry == g
    assert np.array_equal(out.samples, s.samples)


def test_subsample_counts():
    g = make_geometry(4, 1.0, 1152)
    out = subsample_views(Sinogram(np.zeros((4, 1152)), g), 4)
    assert out.geometry.n_views == 288
    assert np.allclose(out.geometry.theta, g.theta[::4], rtol=0, atol=1e-15)


def test_subsample_explicit_indices():
    g = make_geometry(4, 1.0, 8)
    s = Sinogram(np.arange(32.0).reshape(4, 8), g)
    out = subsample_views(s, [4, 0])
    assert out.geometry.theta.tolist() == [g.theta[0], g.theta[4]]
    assert np.array_equal(out.samples, s.samples[:, [0, 4]])


@pytest.mark.parametrize("keep", [0, [], [1, 1], [8], [-1]])
def test_subsample_rejects_bad_selection(keep):
    s = Sinogram(np.zeros((4, 8)), make_geometry(4, 1.0, 8))
    with pytest.raises(ValueError):
        subsample_views(s, keep)


def test_nonuniform_angles_survive_projection():
    grid = GridSpec(4, 4, 0.5)
    g = Geometry(7, 0.5, 3, angles=(0.0, 0.3, 2.0))
    s = forward_project(ImageGrid(np.ones(grid.shape), grid), g)
    assert np.allclose(s.samples.sum(axis=0), 16 * grid.pixel_area / g.bin_width)
