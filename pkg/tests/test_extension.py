import numpy as np
import pytest

from manifold_atlas.errors import (InfeasibleConstraintsError, OutOfTubeError, ValidationError)
from manifold_atlas.extension import (MSNProblem, build_tubular, choose_degree, constraint_matrix,
                                      extend_evaluate, fit_extension, spread_subset, fit_preimage, msn_fit,
                                      msn_objective, operator_root, preimage)
from manifold_atlas.chebyshev import fit_fixed


@pytest.fixture(scope="module")
def helix_preimage(helix_atlas, helix_cloud):
    return fit_preimage(helix_atlas, helix_cloud)


def _box_samples(model, ci, count, rng):
    lo, hi = model.boxes[ci]
    return rng.uniform(np.maximum(lo, -1), np.minimum(hi, 1), (count, lo.size))


def test_preimage_of_training_points(helix_atlas, helix_cloud, helix_preimage):
    chart = helix_atlas.charts[3]
    X = helix_cloud.points[chart.in_chart(helix_cloud.points)][:50]
    back = preimage(helix_preimage, chart.phi(X), 3)
    assert np.max(np.abs(back - X)) <= 1e-2


def test_circle_preimage_radius(circle_atlas, circle_cloud, rng):
    model = fit_preimage(circle_atlas, circle_cloud)
    for ci in range(0, len(circle_atlas.charts), 7):
        x = preimage(model, _box_samples(model, ci, 20, rng), ci)
        assert np.max(np.abs(np.linalg.norm(x, axis=1) - 1.0)) <= 1e-2


def test_helix_roundtrip(helix_atlas, helix_preimage, rng):
    for ci in range(len(helix_atlas.charts)):
        y = _box_samples(helix_preimage, ci, 10, rng)
        back = helix_atlas.charts[ci].phi(preimage(helix_preimage, y, ci))
        assert np.max(np.abs(back - y)) <= 5e-2


def test_preimage_bad_chart(helix_preimage):
    with pytest.raises(ValidationError):
        preimage(helix_preimage, np.zeros((1, 1)), 10_000)


def test_tubular_identity_when_s_equals_d(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[0]
    tub = build_tubular(chart, 1, helix_cloud)
    X = helix_cloud.points[:30]
    assert np.array_equal(tub.coords(X), chart.phi(X))


def test_tubular_frame(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[0]
    tub = build_tubular(chart, 3, helix_cloud)
    F = tub.frame
    assert np.allclose(F.T @ F, np.eye(2), atol=1e-10)
    diffs = np.atleast_2d(chart.anchors) - chart.center
    assert np.max(np.abs(diffs @ F)) <= 1e-8 * np.max(np.linalg.norm(diffs, axis=1))


def test_extra_coordinates_vanish_on_manifold(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[0]
    tub = build_tubular(chart, 2, helix_cloud)
    X = helix_cloud.points[chart.in_chart(helix_cloud.points)]
    assert np.max(np.abs(tub.coords(X)[:, 1])) <= 5e-3


def test_tubular_validation(helix_atlas, helix_cloud):
    with pytest.raises(ValidationError):
        build_tubular(helix_atlas.charts[0], 4, helix_cloud)
    with pytest.raises(ValidationError):
        build_tubular(helix_atlas.charts[0], 0, helix_cloud)
    with pytest.raises(ValidationError):
        build_tubular(helix_atlas.charts[0], 2, helix_cloud, tube_radius=-1.0)


def test_msn_single_constant():
    for N in (1, 3, 6):
        p = msn_fit(MSNProblem(np.zeros((1, 2)), [2.5], N))
        assert p.objective <= 1e-20
        assert np.allclose(p(np.random.default_rng(0).uniform(-1, 1, (20, 2))), 2.5, atol=1e-12)


def test_msn_recovers_linear(rng):
    Y = rng.uniform(-1, 1, (10, 2))
    f = 0.5 + 2 * Y[:, 0] - Y[:, 1]
    p = msn_fit(MSNProblem(Y, f, 4))
    expect = np.zeros((5, 5))
    expect[0, 0], expect[1, 0], expect[0, 1] = 0.5, 2.0, -1.0
    assert np.max(np.abs(p.coeffs - expect)) <= 1e-8
    assert p.objective <= 1e-16


def _random_problem(seed=0):
    r = np.random.default_rng(seed)
    return MSNProblem(r.uniform(-1, 1, (10, 2)), r.standard_normal(10), 6)


@pytest.mark.parametrize("operator", ["laplacian", "identity", "bilaplacian"])
def test_msn_kkt_and_constraints(operator):
    prob = _random_problem()
    prob = MSNProblem(prob.points, prob.values, prob.N, operator)
    p = msn_fit(prob)
    assert p.mode == "interpolation"
    assert p.constraint_residual <= 1e-8
    assert p.kkt_residual <= 1e-6 * max(p.q_norm, 1.0)


def test_msn_feasible_probes_do_not_decrease_objective():
    prob = _random_problem(1)
    p = msn_fit(prob)
    A = constraint_matrix(prob.points, prob.N)
    R = operator_root(prob.N, 2)
    _, sv, vt = np.linalg.svd(A)
    Z = vt[np.sum(sv > 1e-12 * sv[0]):].T
    c = p.coeffs.ravel()
    base = np.sum((R @ c) ** 2)
    assert base == pytest.approx(msn_objective(p), rel=1e-12)
    r = np.random.default_rng(2)
    for _ in range(100):
        v = Z @ r.standard_normal(Z.shape[1])
        v *= 1e-3 / np.linalg.norm(v)
        assert np.sum((R @ (c + v)) ** 2) >= base - 1e-12


def test_msn_duplicate_conflict():
    with pytest.raises(InfeasibleConstraintsError):
        msn_fit(MSNProblem(np.array([[0.1, 0.2], [0.1, 0.2]]), [1.0, 2.0], 3))
    ok = msn_fit(MSNProblem(np.array([[0.1, 0.2], [0.1, 0.2]]), [1.0, 1.0], 3))
    assert ok.constraint_residual <= 1e-12


def test_msn_validation():
    with pytest.raises(ValidationError):
        MSNProblem(np.zeros((2, 1)), [1.0], 2)
    with pytest.raises(ValidationError):
        MSNProblem(np.zeros((1, 1)), [1.0], 2, operator="gradient")
    with pytest.raises(ValidationError):
        msn_fit(MSNProblem(np.array([[1.5]]), [1.0], 2))


def test_msn_overdetermined_is_flagged(rng):
    Y = rng.uniform(-1, 1, (30, 1))
    p = msn_fit(MSNProblem(Y, np.sin(5 * Y[:, 0]), 3))
    assert p.mode == "least-squares"


def test_choose_degree():
    assert choose_degree(10, 2) == 3
    assert choose_degree(1, 1, slack=0) == 1


def test_extension_interpolates_and_rejects_far_points(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[0]
    tub = build_tubular(chart, 2, helix_cloud)
    X = helix_cloud.points[chart.in_chart(helix_cloud.points)][:12]
    f = helix_cloud.values[chart.in_chart(helix_cloud.points)][:12]
    p = fit_extension(tub, X, f)
    assert np.max(np.abs(extend_evaluate(p, tub, X) - f)) <= 1e-8
    with pytest.raises(OutOfTubeError):
        extend_evaluate(p, tub, X[:1] + 100.0)


def test_extension_off_manifold_growth(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[0]
    tub = build_tubular(chart, 2, helix_cloud)
    mask = chart.in_chart(helix_cloud.points)
    X, f = helix_cloud.points[mask][:12], helix_cloud.values[mask][:12]
    p = fit_extension(tub, X, f)
    normal = tub.frame[:, 0]
    for t in (0.02, 0.05, 0.1):
        Z = X + t * tub.tube_radius * normal
        inside = tub.in_tube(Z)
        v = extend_evaluate(p, tub, Z[inside])
        assert np.all(np.isfinite(v))
        assert np.max(np.abs(v)) <= np.max(np.abs(f)) + 1.0


def test_tubular_consistency_with_chebyshev(rng):
    # s = d: the MSN interpolant on a square system is the unique interpolant,
    # which the Chebyshev fit at the same degree also reproduces
    y = np.cos(np.pi * (np.arange(6) + 0.5) / 6)
    f = np.exp(y)
    p = msn_fit(MSNProblem(y[:, None], f, 5))
    model = fit_fixed(y, f, 6, degree=5)
    q = rng.uniform(-1, 1, 50)
    assert np.max(np.abs(p(q[:, None]) - np.polynomial.chebyshev.chebval(q, np.polynomial.chebyshev.chebfit(y, f, 5)))) <= 1e-8
    assert model.n == 6


def test_spread_subset():
    Y = np.linspace(-1, 1, 101)[:, None]
    pick = spread_subset(Y, 5)
    assert np.allclose(Y[pick, 0], [-1, -0.5, 0, 0.5, 1])
    assert spread_subset(Y[:3], 10).tolist() == [0, 1, 2]


def test_extension_accuracy_on_tube_samples(helix_atlas, helix_cloud):
    chart = helix_atlas.charts[5]
    tub = build_tubular(chart, 2, helix_cloud)
    inside = tub.in_tube(helix_cloud.points)
    p = fit_extension(tub, helix_cloud.points, helix_cloud.values)
    assert p.mode == "interpolation" and p.constraint_residual <= 1e-8
    v = extend_evaluate(p, tub, helix_cloud.points[inside])
    assert np.max(np.abs(v - helix_cloud.values[inside])) <= 1e-2
    with pytest.raises(ValidationError):
        fit_extension(tub, helix_cloud.points, helix_cloud.values, N=70)
