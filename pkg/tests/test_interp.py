import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfbp.geometry import make_geometry
from linfbp.interp import (
    BasisSet,
    CoeffTensor,
    default_basis,
    eval_basis,
    kernel_interpolate,
    keys_weight,
    lcr_eval,
    lcr_eval_linear_fast,
    reduction_coefficients,
)


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def test_nearest_rounds_down_below_half():
    assert kernel_interpolate("nearest", [1.0, 3.0], 0.4) == (1.0, True)
    assert kernel_interpolate("nearest", [1.0, 3.0], 0.5) == (3.0, True)


def test_linear_midpoint():
    assert kernel_interpolate("linear", [1.0, 3.0], 0.5) == (2.0, True)


def test_cubic_reproduces_quadratics():
    n = np.arange(20.0)
    samples = 0.3 * n ** 2 - 2.0 * n + 5.0
    for t in rng(1).uniform(2, 17, 200):
        value, ok = kernel_interpolate("cubic", samples, t)
        assert ok and abs(value - (0.3 * t * t - 2.0 * t + 5.0)) < 1e-12


def test_keys_weights_partition_unity():
    for f in np.linspace(0, 1, 11):
        assert sum(keys_weight(f - tap) for tap in range(-1, 3)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("kind", ["nearest", "linear", "cubic"])
def test_out_of_support_is_flagged_zero(kind):
    s = [2.0, 4.0, 6.0]
    assert kernel_interpolate(kind, s, -0.51) == (0.0, False)
    assert kernel_interpolate(kind, s, 2.51) == (0.0, False)
    assert kernel_interpolate(kind, s, -0.5)[1]
    assert kernel_interpolate(kind, s, 2.5)[1]


def test_edges_clamp_to_end_samples():
    s = [2.0, 4.0, 6.0]
    assert kernel_interpolate("linear", s, -0.4)[0] == 2.0
    assert kernel_interpolate("linear", s, 2.4)[0] == 6.0
    assert kernel_interpolate("nearest", s, -0.5)[0] == 2.0


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        kernel_interpolate("sinc", [1.0], 0.0)


def test_basis_examples():
    hat = BasisSet("linear", 2)
    assert eval_basis(hat, 3, 0.0) == 1.0
    assert eval_basis(hat, 4, 0.25) == 0.5
    fourier = BasisSet("fourier", 1)
    for u in (-1.0, -0.3, 0.0, 0.7):
        assert eval_basis(fourier, 1, u) == 1.0


def test_fourier_k1_functions_and_order():
    basis = BasisSet("fourier", 1)
    u = np.linspace(-1, 1, 101)
    expected = np.stack([np.ones_like(u), np.sin(2 * u), np.cos(2 * u)])
    assert np.max(np.abs(basis.evaluate(u) - expected)) < 1e-15
    for c in range(1, 4):
        scalar = np.array([eval_basis(basis, c, x) for x in u])
        assert np.max(np.abs(scalar - expected[c - 1])) < 1e-15


def test_fourier_higher_order():
    basis = BasisSet("fourier", 3)
    u = 0.37
    expected = [1, math.sin(2 * u), math.cos(2 * u), math.sin(4 * u), math.cos(4 * u),
                math.sin(6 * u), math.cos(6 * u)]
    assert np.allclose(basis.evaluate(np.array(u)), expected, rtol=0, atol=1e-15)


def test_vectorized_hats_match_scalar_formula():
    basis = BasisSet("linear", 3)
    u = rng(2).uniform(-1, 1, 300)
    vec = basis.evaluate(u)
    for c in range(1, basis.size + 1):
        assert np.array_equal(vec[c - 1], [eval_basis(basis, c, x) for x in u])


def test_basis_sizes_and_defaults():
    assert default_basis("fourier").size == 3
    assert default_basis("linear").size == 5
    assert BasisSet("linear", 4).size == 9
    with pytest.raises(ValueError):
        BasisSet("linear", 0)
    with pytest.raises(ValueError):
        BasisSet("gauss", 1)
    with pytest.raises(ValueError):
        eval_basis(BasisSet("linear", 1), 4, 0.0)


def test_coeff_tensor_validates():
    g = make_geometry(6, 1.0, 2)
    CoeffTensor(np.zeros((3, 6, 2)), BasisSet("fourier", 1), g)
    with pytest.raises(ValueError):
        CoeffTensor(np.zeros((5, 6, 2)), BasisSet("fourier", 1), g)
    bad = np.zeros((3, 6, 2))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        CoeffTensor(bad, BasisSet("fourier", 1), g)


@pytest.mark.parametrize("basis", [BasisSet("fourier", 1), BasisSet("linear", 2)])
def test_zero_coefficients_give_zero(basis):
    z = np.zeros((basis.size, 7))
    for t in np.linspace(-0.5, 6.5, 29):
        assert lcr_eval(z, basis, t) == (0.0, True)
        assert lcr_eval(z, basis, t, ensemble=True) == (0.0, True)


def test_shifted_copies_reproduce_linear_interpolation():
    samples = rng(3).standard_normal(12)
    basis = BasisSet("linear", 1)
    n = np.arange(12)
    z = np.stack([samples[np.clip(n + c - 2, 0, 11)] for c in range(1, 4)])
    assert np.array_equal(z, reduction_coefficients(samples, 1))
    for t in np.concatenate([rng(4).uniform(-0.5, 11.5, 2000), np.arange(-0.5, 12, 0.5)]):
        got, _ = lcr_eval(z, basis, t)
        want, _ = kernel_interpolate("linear", samples, t)
        assert abs(got - want) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_reduction_holds_for_any_k(k):
    samples = rng(5).standard_normal(10)
    z = reduction_coefficients(samples, k)
    basis = BasisSet("linear", k)
    for t in rng(6).uniform(-0.5, 9.5, 500):
        assert abs(lcr_eval(z, basis, t)[0] - kernel_interpolate("linear", samples, t)[0]) < 1e-12
        assert abs(lcr_eval(z, basis, t, ensemble=True)[0]
                   - kernel_interpolate("linear", samples, t)[0]) < 1e-12


def test_fourier_constant_coefficients():
    z = np.zeros((3, 5))
    z[0] = 1.0
    for t in np.linspace(-0.5, 4.5, 21):
        assert lcr_eval(z, BasisSet("fourier", 1), t)[0] == pytest.approx(1.0, abs=1e-15)


def test_lcr_out_of_support():
    z = np.ones((5, 4))
    assert lcr_eval(z, BasisSet("linear", 2), 3.6) == (0.0, False)
    assert lcr_eval_linear_fast(z, 2, -0.7) == (0.0, False)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fast_path_matches_full_sum(k):
    r = rng(7 + k)
    z = r.standard_normal((2 * k + 1, 16))
    basis = BasisSet("linear", k)
    for t in r.uniform(-0.5, 15.5, 10_000):
        assert abs(lcr_eval_linear_fast(z, k, t)[0] - lcr_eval(z, basis, t)[0]) < 1e-12


def test_fast_path_anchor_returns_weight_exactly():
    z = rng(8).standard_normal((5, 6))
    # t = n + u with ku an integer; u = 0.5 would round into the next cell
    for n in range(6):
        for u in (-0.5, 0.0):
            if n == 0 and u == -0.5:
                continue
            assert lcr_eval_linear_fast(z, 2, n + u)[0] == z[int(2 * u) + 2, n]


def test_center_hat_peak():
    z = np.zeros((5, 3))
    z[:, 1] = [0, 0, 1, 0, 0]
    assert lcr_eval_linear_fast(z, 2, 1.0) == (1.0, True)
    assert lcr_eval(z, BasisSet("linear", 2), 1.0) == (1.0, True)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6), st.floats(-1, 1))
def test_hat_partition_of_unity(k, u):
    vals = BasisSet("linear", k).evaluate(np.array([u]))[:, 0]
    assert abs(vals.sum() - 1.0) < 1e-12
    assert np.count_nonzero(vals) <= 2


def test_hat_partition_of_unity_bulk():
    for k in (1, 2, 5):
        u = rng(9).uniform(-1, 1, 10_000)
        vals = BasisSet("linear", k).evaluate(u)
        assert np.max(np.abs(vals.sum(axis=0) - 1.0)) < 1e-12
        assert np.all(np.count_nonzero(vals, axis=0) <= 2)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5), st.floats(-1, 1), st.floats(0, 0.1))
def test_hat_lipschitz(k, u, eps):
    basis = BasisSet("linear", k)
    for c in range(1, basis.size + 1):
        assert abs(eval_basis(basis, c, u) - eval_basis(basis, c, u + eps)) <= k * eps + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["fourier", "linear"]), st.integers(0, 10_000),
       st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.5, 7.5), st.booleans())
def test_lcr_linear_in_coefficients(family, seed, a, b, t, ensemble):
    basis = BasisSet(family, 2)
    r = rng(seed)
    z1, z2 = r.standard_normal((2, basis.size, 8))
    lhs = lcr_eval(a * z1 + b * z2, basis, t, ensemble)[0]
    rhs = a * lcr_eval(z1, basis, t, ensemble)[0] + b * lcr_eval(z2, basis, t, ensemble)[0]
    assert abs(lhs - rhs) < 1e-12 * (1 + abs(a) + abs(b)) * 10
