import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfbp.geometry import (
    Geometry,
    GridSpec,
    coordinate_field,
    covers_grid,
    fitted_geometry,
    make_geometry,
    project_coordinate,
    round_half_away,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
angles = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


def test_two_views_over_pi():
    g = make_geometry(4, 1.0, 2, math.pi)
    assert np.allclose(g.theta, [0.0, math.pi / 2], atol=0, rtol=0)


def test_scanner_scale_geometry():
    g = make_geometry(736, 1.3696, 1152, math.pi)
    assert g.n_bins == 736 and g.n_views == 1152
    assert g.theta[0] == 0.0 and g.theta[-1] < math.pi
    assert np.all(np.diff(g.theta) > 0)


def test_single_view_minimum():
    g = make_geometry(2, 1.0, 1, math.pi)
    assert g.theta.tolist() == [0.0]
    assert g.view_weight == math.pi


def test_full_rotation_weight_flag():
    g = make_geometry(8, 1.0, 16, 2 * math.pi)
    assert g.view_weight == pytest.approx(2 * math.pi / 16)


@pytest.mark.parametrize("args", [(1, 1.0, 4), (4, 0.0, 4), (4, -1.0, 4), (4, 1.0, 0)])
def test_rejects_bad_counts_and_widths(args):
    with pytest.raises(ValueError):
        make_geometry(*args)


def test_rejects_non_increasing_angles():
    with pytest.raises(ValueError):
        Geometry(4, 1.0, 2, angles=(0.5, 0.5))
    with pytest.raises(ValueError):
        Geometry(4, 1.0, 2, angle_span=math.pi, angles=(0.0, math.pi))


@pytest.mark.parametrize("x, y, theta, t", [
    (1.0, 0.0, 0.0, 1.0),
    (0.0, 1.0, math.pi / 2, 1.0),
    (1.0, 1.0, math.pi / 4, math.sqrt(2.0)),
])
def test_project_coordinate_axes(x, y, theta, t):
    assert project_coordinate(x, y, theta) == pytest.approx(t, abs=1e-15)


def test_round_half_away_ties():
    assert round_half_away(0.5) == 1
    assert round_half_away(-0.5) == -1
    assert round_half_away(1.5) == 2
    assert round_half_away(2.4999) == 2


def test_center_pixel_maps_to_center_bin():
    grid = GridSpec(1, 1, 1.0)
    g = make_geometry(7, 1.0, 5)
    for m in range(g.n_views):
        f = coordinate_field(grid, g, m)
        assert f.t_frac[0, 0] == pytest.approx(g.center_index, abs=1e-15)


def test_columns_share_t_at_theta_zero():
    grid = GridSpec(3, 3, 1.0)
    f = coordinate_field(grid, make_geometry(5, 1.0, 4), 0)
    assert np.all(f.t_frac == f.t_frac[0:1, :])


def test_field_matches_elementwise_oracle():
    grid = GridSpec(8, 8, 0.7)
    g = make_geometry(13, 0.6, 12)
    xs, ys = grid.x_coords(), grid.y_coords()
    for m in range(g.n_views):
        f = coordinate_field(grid, g, m)
        for i in range(8):
            for j in range(8):
                t = project_coordinate(xs[j], ys[i], g.theta[m])
                s = t / g.bin_width + (g.n_bins - 1) / 2
                assert abs(f.t_frac[i, j] - s) < 1e-12


def test_field_flags_instead_of_clamping():
    grid = GridSpec(16, 16, 1.0)
    g = make_geometry(5, 1.0, 3)
    f = coordinate_field(grid, g, 0)
    assert not f.in_support.all()
    assert f.t_frac.min() < -0.5  # raw coordinate preserved
    with pytest.raises(IndexError):
        coordinate_field(grid, g, 3)


def test_field_is_pure():
    grid = GridSpec(9, 7, 0.3)
    g = make_geometry(21, 0.25, 10)
    a = coordinate_field(grid, g, 4)
    b = coordinate_field(grid, g, 4)
    assert a.t_frac.tobytes() == b.t_frac.tobytes()
    assert np.array_equal(a.nearest, b.nearest)


def test_grid_coordinates_symmetric():
    grid = GridSpec(4, 5, 0.5)
    assert np.allclose(grid.x_coords(), [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert np.allclose(grid.y_coords(), [0.75, 0.25, -0.25, -0.75])  # row 0 is the top


def test_fitted_geometry_covers_grid():
    for size in (1, 2, 8, 63, 64, 128):
        grid = GridSpec(size, size, 2.0 / size)
        g = fitted_geometry(grid, 10)
        assert covers_grid(g, grid)
    assert fitted_geometry(GridSpec(128, 128, 2 / 128), 360).n_bins == 181


def test_geometry_dict_roundtrip():
    g = make_geometry(95, 0.03125, 60, math.pi, 0.25)
    assert Geometry.from_dict(g.to_dict()) == g
    assert set(g.to_dict()) == {"n_bins", "bin_width_mm", "n_views", "angle_span_rad",
                                "detector_center_offset"}


@settings(max_examples=1000, deadline=None)
@given(finite, finite, angles)
def test_point_reflection_negates_coordinate(x, y, theta):
    a = project_coordinate(x, y, theta)
    b = project_coordinate(-x, -y, theta + math.pi)
    assert a == pytest.approx(b, abs=1e-9 * (1 + abs(x) + abs(y)))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.floats(0.01, 3.0), angles)
def test_cauchy_schwarz_bound(h, w, ps, theta):
    grid = GridSpec(h, w, ps)
    x = grid.x_coords()[None, :]
    y = grid.y_coords()[:, None]
    t = project_coordinate(x, y, theta)
    assert np.all(np.abs(t) <= np.hypot(x, y) * (1 + 1e-12) + 1e-15)
