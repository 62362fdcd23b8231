import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_atlas.bspline import (SplineModel, bspline_1d, bspline_truncated_power, eval_bspline,
                                    eval_spline, fit_scattered, lambda_star, quasi_interpolate)
from manifold_atlas.errors import CoverageError, ValidationError


@pytest.mark.parametrize("m,y,expected", [(2, 1.0, 1.0), (2, 0.5, 0.5), (4, 2.0, 2 / 3)])
def test_bspline_values(m, y, expected):
    assert eval_bspline(m, 1, np.array([y])) == pytest.approx(expected, abs=1e-14)
    assert bspline_truncated_power(m, y) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_recursion_matches_truncated_powers(m):
    t = np.linspace(-0.5, m + 0.5, 57)
    ref = np.array([bspline_truncated_power(m, v) for v in t])
    assert np.allclose(bspline_1d(m, t), ref, atol=1e-13)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_partition_of_unity(m, rng):
    y = rng.uniform(-5, 5, 1000)
    total = sum(bspline_1d(m, y + k) for k in range(-m - 6, m + 7))
    assert np.max(np.abs(total - 1)) <= 1e-10


@pytest.mark.parametrize("m", [2, 3, 4])
def test_local_support(m, rng):
    outside = np.concatenate([rng.uniform(-3, 0, 200) - 1e-9, rng.uniform(m, m + 3, 200)])
    outside = np.concatenate([outside, [0.0, float(m)]])
    assert np.all(bspline_1d(m, outside) == 0.0)
    y = np.column_stack([rng.uniform(0.1, m - 0.1, 50), rng.uniform(m, m + 1, 50)])
    assert np.all(eval_bspline(m, 2, y) == 0.0)


def test_tensor_product():
    y = np.array([[0.5, 2.0], [1.5, 1.0]])
    assert np.allclose(eval_bspline(4, 2, y), bspline_1d(4, y[:, 0]) * bspline_1d(4, y[:, 1]))
    with pytest.raises(ValidationError):
        eval_bspline(4, 3, y)
    with pytest.raises(ValidationError):
        eval_bspline(1, 1, y[:, :1])


def test_lambda_star_m2_is_identity():
    st2 = lambda_star(2, 1)
    assert st2.offsets.tolist() == [[0]] and st2.coeffs.tolist() == [1.0]


def test_lambda_star_m4_three_points():
    s = lambda_star(4, 1)
    assert s.offsets.ravel().tolist() == [-1, 0, 1]
    assert s.coeffs.sum() == pytest.approx(1.0, abs=1e-15)
    assert s.coeffs[0] == s.coeffs[2]
    # cubic case: the classical stencil (-1/6, 4/3, -1/6)
    assert np.allclose(s.coeffs, [-1 / 6, 4 / 3, -1 / 6], atol=1e-15)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("d", [1, 2])
def test_stencil_constant_and_tensor(m, d):
    s = lambda_star(m, d)
    assert s.apply(lambda x: 1.0) == pytest.approx(1.0, abs=1e-13)
    assert s.offsets.shape == ((s.offsets.shape[0]), d)
    assert s.offsets.shape[0] == (2 * ((m - 1) // 2) + 1) ** d


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_ideal_quasi_interpolant_reproduces_polynomials(m):
    y = np.linspace(-1, 1, 41)[:, None]
    for r in range(m):
        q = quasi_interpolate(lambda p: p[:, 0] ** r, m, 0.125, y)
        assert np.max(np.abs(q - y[:, 0] ** r)) <= 1e-11


def test_ideal_reproduction_in_two_dimensions():
    y = np.random.default_rng(3).uniform(-1, 1, (50, 2))
    q = quasi_interpolate(lambda p: p[:, 0] ** 2 * p[:, 1] - 3 * p[:, 1] ** 2, 3, 0.25, y)
    assert np.allclose(q, y[:, 0] ** 2 * y[:, 1] - 3 * y[:, 1] ** 2, atol=1e-11)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_scattered_constant(m):
    y = np.linspace(-1, 1, 401)
    model = fit_scattered(y, np.ones_like(y), m, 0.125)
    inner = np.linspace(-1 + m * 0.125, 1 - m * 0.125, 101)
    assert np.max(np.abs(model(inner) - 1)) <= max(10 * model.max_residual, 1e-12)


def test_scattered_linear_m2():
    y = np.linspace(-1, 1, 513)
    model = fit_scattered(y, 0.7 * y - 0.2, 2, 0.0625)
    inner = np.linspace(-1 + 2 * 0.0625, 1 - 2 * 0.0625, 200)
    assert np.max(np.abs(model(inner) - (0.7 * inner - 0.2))) <= 1e-9


@pytest.mark.parametrize("m", [2, 3, 4])
def test_scattered_polynomial_reproduction(m, rng):
    y = rng.uniform(-1, 1, (3000, 1))
    h = 0.125
    c = rng.standard_normal(m)
    f = np.polynomial.polynomial.polyval(y[:, 0], c)
    model = fit_scattered(y, f, m, h)
    inner = np.linspace(-1 + m * h, 1 - m * h, 301)
    err = np.max(np.abs(model(inner) - np.polynomial.polynomial.polyval(inner, c)))
    assert err <= 10 * model.max_residual * np.abs(c).sum() + 1e-9


def test_scattered_reproduction_2d(rng):
    y = rng.uniform(-1, 1, (6000, 2))
    model = fit_scattered(y, y[:, 0] * y[:, 1] + y[:, 1], 2, 0.25)
    g = np.linspace(-0.5, 0.5, 11)
    Q = np.array([[a, b] for a in g for b in g])
    assert np.max(np.abs(model(Q) - (Q[:, 0] * Q[:, 1] + Q[:, 1]))) <= 1e-8


def test_clustered_data_raises_coverage_error(rng):
    y = rng.uniform(-1, -0.2, 500)
    with pytest.raises(CoverageError) as info:
        fit_scattered(y, np.sin(y), 2, 0.125)
    assert info.value.orphans
    assert all(k[0] > 0 for k in info.value.orphans)


def test_eval_outside_support_is_zero():
    y = np.linspace(-1, 1, 201)
    model = fit_scattered(y, np.ones_like(y), 2, 0.125)
    assert np.all(eval_spline(model, np.array([5.0, -5.0])) == 0.0)


def test_order_two_convergence():
    def err(h):
        y = np.linspace(-1, 1, 4097)
        model = fit_scattered(y, np.sin(np.pi * y / 2), 2, h)
        inner = np.linspace(-0.75, 0.75, 1001)
        return np.max(np.abs(model(inner) - np.sin(np.pi * inner / 2)))

    ratio = err(1 / 16) / err(1 / 32)
    assert 3.0 <= ratio <= 5.0


def test_json_round_trip(rng):
    y = rng.uniform(-1, 1, 800)
    model = fit_scattered(y, np.cos(y), 3, 0.25)
    back = SplineModel.from_json(model.to_json())
    q = np.linspace(-1, 1, 33)
    assert np.array_equal(back(q), model(q))
    assert back.shifts == model.shifts
    with pytest.raises(ValidationError):
        SplineModel.from_json({"m": 2})


def test_fit_validation():
    with pytest.raises(ValidationError):
        fit_scattered(np.zeros(3), np.zeros(2), 2, 0.5)
    with pytest.raises(ValidationError):
        fit_scattered(np.zeros(3), np.zeros(3), 2, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.floats(-10, 10, allow_nan=False))
def test_bspline_nonnegative_and_bounded(m, t):
    v = bspline_1d(m, np.array([t]))[0]
    assert 0.0 <= v <= 1.0
