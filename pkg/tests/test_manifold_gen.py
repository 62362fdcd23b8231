import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_atlas.errors import ParseError, SchemaError, UnsupportedOperationError, ValidationError
from manifold_atlas.manifold_gen import (ManifoldSpec, PointCloud, embed_params, geodesic_distance,
                                         helix_point, load_csv, parse_field, sample_field,
                                         sample_manifold, save_csv, smooth_family)


def test_helix_starts_at_e1():
    assert np.allclose(helix_point(0.0, 0.8), [1.0, 0.0, 0.0], atol=0)


def test_helix_geodesic_vs_chord_after_2pi():
    # s is arclength, so s -> s + 2*pi is not a full turn; the chord follows
    # the closed form of the squared-distance map instead of 2*pi*sqrt(1 - a^2)
    a = 0.8
    spec = ManifoldSpec("helix", a=a)
    x0, x1 = embed_params(spec, [0.0, 2 * math.pi])
    assert geodesic_distance(spec, 0.0, 2 * math.pi) == pytest.approx(2 * math.pi)
    closed = math.sqrt(2 - 2 * math.cos(2 * math.pi * a) + (1 - a * a) * (2 * math.pi) ** 2)
    assert np.linalg.norm(x1 - x0) == pytest.approx(closed, abs=1e-12)


def test_helix_full_turn_chord_shrinks_with_a():
    for a in (0.8, 0.95, 0.99):
        spec = ManifoldSpec("helix", a=a)
        x0, x1 = embed_params(spec, [0.0, 2 * math.pi / a])
        assert np.linalg.norm(x1 - x0) == pytest.approx(2 * math.pi * math.sqrt(1 - a * a) / a, abs=1e-12)


def test_circle_points_on_unit_circle():
    cloud = sample_manifold(ManifoldSpec("circle", n=4, D=2, seed=3))
    assert cloud.points.shape == (4, 2)
    assert np.allclose(np.linalg.norm(cloud.points, axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize("kind,p", [("helix", 1.3), ("circle", 0.4), ("sphere", [0.3, 1.1])])
def test_geodesic_zero_on_diagonal(kind, p):
    spec = ManifoldSpec(kind)
    assert np.all(geodesic_distance(spec, p, p) == 0)


def test_circle_quarter_arc():
    assert geodesic_distance(ManifoldSpec("circle"), 0.0, math.pi / 2) == pytest.approx(math.pi / 2)


def test_torus_has_no_geodesic_oracle():
    with pytest.raises(UnsupportedOperationError):
        geodesic_distance(ManifoldSpec("torus"), [0.0, 0.0], [1.0, 1.0])


def test_fields_spot_values():
    cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), params=np.array([[math.pi / 2]]))
    assert sample_field(cloud, "coordinate-sum").values[0] == 1.0
    assert sample_field(cloud, "trig:1").values[0] == pytest.approx(1.0)
    c = np.array([0.3, -0.2, 0.5])
    assert sample_field(PointCloud(c[None]), "gaussian-bump", center=c).values[0] == 1.0


def test_parse_field_rejects_unknown():
    assert parse_field("trig:2") == ("trig", 2.0)
    with pytest.raises(ValidationError):
        parse_field("wavelet")
    with pytest.raises(ValidationError):
        parse_field("trig:x")


def test_smooth_family_regularity():
    t = np.linspace(-1, 1, 5)
    assert np.allclose(smooth_family(t, 2), np.where(t > 0, t, 0) ** 3)


def test_spec_validation():
    with pytest.raises(ValidationError):
        ManifoldSpec("helix", a=1.0)
    with pytest.raises(ValidationError):
        ManifoldSpec("klein")
    with pytest.raises(ValidationError):
        ManifoldSpec("torus", r=2.0, R=1.0)
    with pytest.raises(ValidationError):
        ManifoldSpec("helix", noise=-1.0)
    with pytest.raises(ValidationError):
        ManifoldSpec("sphere", D=2)


def test_seed_determinism():
    spec = ManifoldSpec("torus", n=300, seed=9, noise=0.01, D=5)
    a, b = sample_manifold(spec), sample_manifold(spec)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.shape == (300, 5)


def test_helix_trig_identity_and_chords():
    spec = ManifoldSpec("helix", n=400, seed=4, a=0.7)
    cloud = sample_manifold(spec)
    s = cloud.params[:, 0]
    assert np.allclose(cloud.points[:, 0] ** 2 + cloud.points[:, 1] ** 2, 1.0, atol=1e-12)
    i, j = np.triu_indices(100, 1)
    chord = np.linalg.norm(cloud.points[i] - cloud.points[j], axis=1)
    assert np.all(chord <= geodesic_distance(spec, s[i], s[j]) + 1e-12)


def test_circle_chords_below_arcs():
    spec = ManifoldSpec("circle", n=200, seed=5, radius=2.0)
    cloud = sample_manifold(spec)
    i, j = np.triu_indices(200, 1)
    chord = np.linalg.norm(cloud.points[i] - cloud.points[j], axis=1)
    geo = geodesic_distance(spec, cloud.params[i, 0], cloud.params[j, 0])
    assert np.all(chord <= geo + 1e-12)


def test_csv_round_trip(tmp_path):
    cloud = sample_field(sample_manifold(ManifoldSpec("sphere", n=50, seed=1)), "coordinate-sum")
    path = tmp_path / "c.csv"
    save_csv(cloud, path)
    back = load_csv(path)
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.values, cloud.values)
    assert np.array_equal(back.params, cloud.params)


def test_csv_row_format(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("x1,x2,x3,f\n1.0,2.0,3.0,0.5\n")
    cloud = load_csv(path)
    assert np.array_equal(cloud.points, [[1.0, 2.0, 3.0]])
    assert cloud.values[0] == 0.5


@pytest.mark.parametrize("text,err", [
    ("", SchemaError),
    ("x1,x2\n1.0\n", SchemaError),
    ("x1,x2\n1.0,abc\n", ParseError),
    ("x1,zz\n1.0,2.0\n", SchemaError),
    ("y1\n1.0\n", SchemaError),
])
def test_csv_errors(tmp_path, text, err):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(err):
        load_csv(path)


def test_point_cloud_rejects_nonfinite():
    with pytest.raises(ValidationError):
        PointCloud(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValidationError):
        PointCloud(np.zeros((3, 2)), values=np.zeros(2))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-20, 20), st.floats(-20, 20))
def test_helix_chord_never_exceeds_arclength(a, s1, s2):
    x1, x2 = helix_point(np.array([s1, s2]), a)
    assert np.linalg.norm(x1 - x2) <= abs(s1 - s2) + 1e-12
