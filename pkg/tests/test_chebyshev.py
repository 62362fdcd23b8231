import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_atlas.chebyshev import (DEFAULT_L1_CAP, ChebModel, cheb_eval, cheb_eval_monomial, cheb_eval_tensor,
                                      cheb_monomial_coeffs, compute_coeffs, eval_clenshaw, eval_direct,
                                      filter_eval, filter_tensor, fit_auto, fit_fixed, kernel_phi)
from manifold_atlas.errors import ValidationError
from manifold_atlas.quadrature import MomentSpec, solve_moments

from conftest import chebyshev_points

NODES21 = np.cos(np.pi * (np.arange(21) + 0.5) / 21)


def test_small_values():
    assert cheb_eval(2, 0.5) == pytest.approx(-0.5, abs=1e-15)
    assert cheb_eval(3, 0.5) == pytest.approx(-1.0, abs=1e-15)
    assert cheb_eval_tensor([2, 3], np.array([0.5, 0.5])) == pytest.approx(0.5)


def test_t4_monomial_coefficients():
    assert [int(c) for c in cheb_monomial_coeffs(4)] == [1, 0, -8, 0, 8]
    assert np.max(np.abs(cheb_eval_monomial(4, NODES21) - cheb_eval(4, NODES21))) <= 1e-12


@pytest.mark.parametrize("m", range(0, 7))
def test_monomial_expansion_matches_numpy(m):
    ref = np.polynomial.chebyshev.cheb2poly([0] * m + [1])
    assert np.allclose([float(c) for c in cheb_monomial_coeffs(m)], ref, atol=0)
    assert np.max(np.abs(cheb_eval_monomial(m, NODES21) - cheb_eval(m, NODES21))) <= 1e-10


def test_recurrence_bounded(rng):
    t = rng.uniform(-1, 1, 1000)
    for m in range(65):
        assert np.max(np.abs(cheb_eval(m, t))) <= 1 + 1e-12
    assert np.allclose(cheb_eval(37, t), np.cos(37 * np.arccos(t)), atol=1e-11)


def test_negative_degree():
    with pytest.raises(ValidationError):
        cheb_eval(-1, 0.0)


def test_filter_examples():
    assert filter_eval(0.3) == 1.0
    assert filter_eval(1.2) == 0.0
    assert 0.0 < filter_eval(0.75) < 1.0
    assert filter_eval(0.6) >= filter_eval(0.9)
    for kind in ("smooth-exp", "cosine"):
        u = np.linspace(0, 1.5, 301)
        h = filter_eval(u, kind)
        assert np.all(np.diff(h) <= 0) and h.min() >= 0 and h.max() <= 1
        assert np.array_equal(filter_eval(-u, kind), h)
    with pytest.raises(ValidationError):
        filter_eval(0.2, "box")


def test_filter_tensor_product():
    F = filter_tensor(8, 2)
    h = filter_eval(np.arange(8) / 8)
    assert np.allclose(F, np.outer(h, h))


def _cheb_grid(n):
    return np.cos(np.pi * np.arange(n) / (n - 1))


def test_constant_coefficients():
    y = _cheb_grid(33)
    model = fit_fixed(y, np.ones_like(y), 8)
    assert model.coeffs[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(model.coeffs[1:])) <= max(model.weights.residual, 1e-12) * 2 * 33


def test_t2_coefficients():
    y = _cheb_grid(33)
    w = solve_moments(y, MomentSpec.chebyshev(1, 15))
    model = compute_coeffs(y, cheb_eval(2, y), 8, w)
    expect = np.zeros(8)
    expect[2] = 1.0
    assert np.max(np.abs(model.coeffs - expect)) <= 1e-10


def test_n1_weighted_mean(rng):
    y = rng.uniform(-1, 1, 20)
    f = rng.standard_normal(20)
    w = solve_moments(y, MomentSpec.chebyshev(1, 0))
    model = compute_coeffs(y, f, 1, w)
    assert model.coeffs.shape == (1,)
    assert model.coeffs[0] == pytest.approx(w.weights @ f[w.indices], abs=1e-14)


def test_compute_coeffs_validation(rng):
    y = rng.uniform(-1, 1, 20)
    with pytest.raises(ValidationError, match="exactness_degree_search"):
        compute_coeffs(y, y, 4, None)
    w = solve_moments(y, MomentSpec.chebyshev(1, 2))
    with pytest.raises(ValidationError):
        compute_coeffs(y, y, 5, w)
    wm = solve_moments(y, MomentSpec.monomial(1, 4))
    with pytest.raises(ValidationError):
        compute_coeffs(y, y, 2, wm)


def test_clenshaw_examples():
    one = ChebModel(1, 1, np.array([2.5]))
    assert np.all(eval_clenshaw(one, np.linspace(-1, 1, 7)) == 2.5)
    t2 = ChebModel(3, 1, np.array([0.0, 0.0, 1.0]))
    y = np.linspace(-1, 1, 11)
    assert np.allclose(eval_clenshaw(t2, y), 2 * y ** 2 - 1, atol=1e-15)


def test_clenshaw_vs_direct(rng):
    model = ChebModel(6, 2, rng.standard_normal((6, 6)))
    y = rng.uniform(-1, 1, (200, 2))
    assert np.max(np.abs(eval_clenshaw(model, y) - eval_direct(model, y))) <= 1e-11
    m3 = ChebModel(5, 3, rng.standard_normal((5, 5, 5)))
    y3 = rng.uniform(-1, 1, (50, 3))
    tol = 1e-10 * np.abs(m3.coeffs).sum()
    assert np.max(np.abs(eval_clenshaw(m3, y3) - eval_direct(m3, y3))) <= tol


def test_kernel_matches_coefficient_form(rng):
    y = _cheb_grid(33)
    f = np.exp(y)
    w = solve_moments(y, MomentSpec.chebyshev(1, 15))
    model = compute_coeffs(y, f, 8, w)
    q = rng.uniform(-1, 1, 25)
    K = kernel_phi(8, q[:, None], y[w.indices][:, None])
    assert np.allclose(K @ (w.weights * f[w.indices]), model(q), atol=1e-12)


def test_fit_auto_examples():
    single = fit_auto(np.array([0.2]), np.array([3.0]))
    assert single.n == 1 and single(np.array([0.9]))[0] == pytest.approx(3.0)
    grid = fit_auto(_cheb_grid(33), np.zeros(33))
    assert grid.n >= 8


def test_exponential_convergence():
    y = _cheb_grid(129)
    q = np.linspace(-1, 1, 2001)
    errs = []
    for n in (4, 8, 16):
        model = fit_fixed(y, np.exp(y), n)
        errs.append(np.max(np.abs(model(q) - np.exp(q))))
    for a, b in zip(errs, errs[1:]):
        assert b < a and (b <= 0.5 * a or b <= 1e-12)


@pytest.mark.parametrize("d,n", [(1, 4), (1, 8), (1, 16), (2, 4), (2, 8)])
def test_polynomial_reproduction(d, n):
    pts = chebyshev_points(3 * (2 * n) ** d, d, seed=n)
    r = np.random.default_rng(n)
    deg = n // 2
    c = r.standard_normal((deg + 1,) * d)
    P = ChebModel(deg + 1, d, c)
    model = fit_fixed(pts, P(pts), n)
    q = r.uniform(-1, 1, (500, d))
    assert np.max(np.abs(model(q) - P(q))) <= 1e-8


def test_filtered_zeros_are_exact():
    y = _cheb_grid(65)
    model = fit_fixed(y, np.sin(3 * y), 16)
    h = filter_tensor(16, 1)
    assert np.all(model.coeffs[h == 0] == 0.0)


def test_json_round_trip():
    y = _cheb_grid(33)
    model = fit_fixed(y, np.cos(y), 8)
    back = ChebModel.from_json(model.to_json())
    assert set(model.to_json()) >= {"n", "d", "coeffs", "filter"}
    assert np.array_equal(back.coeffs, model.coeffs)
    with pytest.raises(ValidationError):
        ChebModel.from_json({"n": 2, "d": 1, "coeffs": [1.0]})


def test_l1_cap_limits_weight_growth(rng):
    y = rng.uniform(-1, 1, (1000, 2))
    model = fit_auto(y, np.ones(1000), start_n=8)
    assert np.abs(model.weights.weights).sum() <= DEFAULT_L1_CAP
    free = fit_auto(y, np.ones(1000), start_n=8, l1_cap=None)
    assert free.n >= model.n


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.floats(-1, 1))
def test_recurrence_equals_cosine_form(m, t):
    assert abs(cheb_eval(m, t) - np.cos(m * np.arccos(t))) <= 1e-10
