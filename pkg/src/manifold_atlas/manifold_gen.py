"""Synthetic embedded manifolds, scalar test fields, and CSV persistence."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, UnsupportedOperationError, ValidationError

KINDS = ("helix", "circle", "sphere", "torus")


@dataclass(frozen=True)
class PointCloud:
    """Sample points in R^D with optional values and intrinsic parameters.

    ``params`` exists for test oracles (geodesics, exact fields); nothing in the
    fitting code reads it.
    """

    points: np.ndarray
    values: np.ndarray | None = None
    params: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValidationError("points must be an (n, D) array with D >= 1", "points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite", "points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        if self.values is not None:
            vals = np.asarray(self.values, dtype=float).reshape(-1)
            if vals.shape[0] != n:
                raise ValidationError("values length differs from number of points", "values")
            vals.setflags(write=False)
            object.__setattr__(self, "values", vals)
        if self.params is not None:
            par = np.asarray(self.params, dtype=float)
            if par.ndim == 1:
                par = par[:, None]
            if par.shape[0] != n:
                raise ValidationError("params length differs from number of points", "params")
            par.setflags(write=False)
            object.__setattr__(self, "params", par)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_values(self, values) -> "PointCloud":
        return PointCloud(self.points, values, self.params)

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        return PointCloud(
            self.points[idx],
            None if self.values is None else self.values[idx],
            None if self.params is None else self.params[idx],
        )


@dataclass(frozen=True)
class ManifoldSpec:
    """Which manifold to sample and how.

    kind
        ``helix`` (parameter ``a``), ``circle`` (``radius``, ambient ``D``),
        ``sphere`` (unit 2-sphere in ambient ``D >= 3``) or ``torus``
        (tube radius ``r``, centre radius ``R``, ambient ``D >= 3``).
    param_range
        Range of the (first) intrinsic parameter. Defaults: helix arclength
        ``(0, 4*pi)``, circle angle ``(0, 2*pi)``.
    """

    kind: str = "helix"
    n: int = 1000
    seed: int = 0
    noise: float = 0.0
    a: float = 0.8
    radius: float = 1.0
    D: int | None = None
    r: float = 0.5
    R: float = 1.0
    param_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}", "kind")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be a positive integer", "n")
        if not math.isfinite(self.noise) or self.noise < 0:
            raise ValidationError("noise must be finite and >= 0", "noise")
        if self.kind == "helix" and not (0.0 < self.a < 1.0):
            raise ValidationError("helix requires 0 < a < 1", "a")
        if self.kind == "circle" and not self.radius > 0:
            raise ValidationError("circle radius must be > 0", "radius")
        if self.kind == "torus" and not (0 < self.r < self.R):
            raise ValidationError("torus requires 0 < r < R", "r")
        if self.D is not None and self.D < self.min_ambient_dim:
            raise ValidationError(f"{self.kind} needs D >= {self.min_ambient_dim}", "D")
        if self.param_range is not None:
            lo, hi = self.param_range
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError("param_range must be finite with lo < hi", "param_range")

    @property
    def min_ambient_dim(self) -> int:
        return {"helix": 3, "circle": 2, "sphere": 3, "torus": 3}[self.kind]

    @property
    def ambient_dim(self) -> int:
        return self.D if self.D is not None else self.min_ambient_dim

    @property
    def intrinsic_dim(self) -> int:
        return 1 if self.kind in ("helix", "circle") else 2


def helix_point(s, a: float) -> np.ndarray:
    """u(s) = (cos as, sin as, sqrt(1-a^2) s); s is arclength from (1, 0, 0)."""
    s = np.asarray(s, dtype=float)
    return np.stack([np.cos(a * s), np.sin(a * s), math.sqrt(1.0 - a * a) * s], axis=-1)


def _embed(spec: ManifoldSpec, params: np.ndarray) -> np.ndarray:
    n = params.shape[0]
    out = np.zeros((n, spec.ambient_dim))
    if spec.kind == "helix":
        out[:, :3] = helix_point(params[:, 0], spec.a)
    elif spec.kind == "circle":
        out[:, 0] = spec.radius * np.cos(params[:, 0])
        out[:, 1] = spec.radius * np.sin(params[:, 0])
    elif spec.kind == "sphere":
        theta, phi = params[:, 0], params[:, 1]
        out[:, 0] = np.sin(theta) * np.cos(phi)
        out[:, 1] = np.sin(theta) * np.sin(phi)
        out[:, 2] = np.cos(theta)
    else:
        u, v = params[:, 0], params[:, 1]
        out[:, 0] = (spec.R + spec.r * np.cos(v)) * np.cos(u)
        out[:, 1] = (spec.R + spec.r * np.cos(v)) * np.sin(u)
        out[:, 2] = spec.r * np.sin(v)
    return out


def embed_params(spec: ManifoldSpec, params) -> np.ndarray:
    """Exact embedding of intrinsic parameters (no noise)."""
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    return _embed(spec, params)


def sample_manifold(spec: ManifoldSpec) -> PointCloud:
    """Random sample of ``spec.n`` points, deterministic for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if spec.kind == "helix":
        lo, hi = spec.param_range or (0.0, 4.0 * math.pi)
        params = rng.uniform(lo, hi, size=(n, 1))
    elif spec.kind == "circle":
        lo, hi = spec.param_range or (0.0, 2.0 * math.pi)
        params = rng.uniform(lo, hi, size=(n, 1))
    elif spec.kind == "sphere":
        # area-uniform: cos(theta) uniform
        lo, hi = spec.param_range or (0.0, math.pi)
        z = rng.uniform(math.cos(hi), math.cos(lo), size=n)
        params = np.column_stack([np.arccos(z), rng.uniform(0.0, 2.0 * math.pi, size=n)])
    else:
        lo, hi = spec.param_range or (0.0, 2.0 * math.pi)
        params = np.column_stack([rng.uniform(lo, hi, size=n), rng.uniform(0.0, 2.0 * math.pi, size=n)])
    points = _embed(spec, params)
    if spec.noise > 0:
        points = points + spec.noise * rng.standard_normal(points.shape)
    return PointCloud(points, None, params)


def geodesic_distance(spec: ManifoldSpec, p1, p2):
    """Exact geodesic distance between intrinsic parameters (vectorised).

    Supported for helix (arclength difference), circle (shorter arc) and the
    unit sphere (great circle). Test oracle only.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if spec.kind == "helix":
        return np.abs(p1 - p2).reshape(np.broadcast(p1, p2).shape)
    if spec.kind == "circle":
        ang = np.mod(np.abs(p1 - p2), 2.0 * math.pi)
        return spec.radius * np.minimum(ang, 2.0 * math.pi - ang)
    if spec.kind == "sphere":
        x1 = embed_params(spec, np.atleast_2d(p1))[:, :3]
        x2 = embed_params(spec, np.atleast_2d(p2))[:, :3]
        cos = np.clip(np.sum(x1 * x2, axis=1), -1.0, 1.0)
        return np.arccos(cos)
    raise UnsupportedOperationError(f"no exact geodesics for {spec.kind!r}")


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

FIELDS = ("coordinate-sum", "gaussian-bump", "trig", "smooth")


def smooth_family(t, r: int, knot: float = 0.0):
    """(t - knot)_+^(r+1): r continuous derivatives, Lipschitz r-th derivative."""
    t = np.asarray(t, dtype=float)
    return np.where(t > knot, (t - knot), 0.0) ** (r + 1)


def parse_field(text: str) -> tuple[str, float]:
    """``"trig:2"`` -> ``("trig", 2.0)``; bare names get parameter 1."""
    name, _, arg = text.partition(":")
    name = name.strip()
    if name not in FIELDS:
        raise ValidationError(f"field must be one of {FIELDS}, got {name!r}", "field")
    try:
        param = float(arg) if arg else 1.0
    except ValueError:
        raise ValidationError(f"bad field parameter {arg!r}", "field") from None
    return name, param


def sample_field(cloud: PointCloud, field: str, param: float | None = None,
                 center=None, width: float = 0.5) -> PointCloud:
    """Fill ``values`` with a deterministic test field.

    coordinate-sum
        sum of ambient coordinates.
    gaussian-bump
        exp(-||x - center||^2 / (2 width^2)); ``center`` defaults to the first point.
    trig
        sin(param * t), t the first intrinsic parameter (or x1 without params).
    smooth
        ``smooth_family(t, r=param)``, knot at the midpoint of t's range.
    """
    if len(cloud) == 0:
        raise ValidationError("cloud is empty", "cloud")
    if ":" in field:
        field, param = parse_field(field)
    elif field not in FIELDS:
        raise ValidationError(f"field must be one of {FIELDS}, got {field!r}", "field")
    param = 1.0 if param is None else float(param)
    X = cloud.points
    t = cloud.params[:, 0] if cloud.params is not None else X[:, 0]
    if field == "coordinate-sum":
        vals = X.sum(axis=1)
    elif field == "gaussian-bump":
        c = X[0] if center is None else np.asarray(center, dtype=float)
        vals = np.exp(-np.sum((X - c) ** 2, axis=1) / (2.0 * width ** 2))
    elif field == "trig":
        vals = np.sin(param * t)
    else:
        vals = smooth_family(t, int(param), 0.5 * (t.min() + t.max()))
    return cloud.with_values(vals)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def save_csv(cloud: PointCloud, path) -> None:
    D = cloud.dim
    header = [f"x{i + 1}" for i in range(D)]
    cols = [cloud.points]
    if cloud.values is not None:
        header.append("f")
        cols.append(cloud.values[:, None])
    if cloud.params is not None:
        k = cloud.params.shape[1]
        header += ["param"] if k == 1 else [f"param{i + 1}" for i in range(k)]
        cols.append(cloud.params)
    data = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and float rows of a comma-separated file."""
    text = Path(path).read_text()
    rows = list(csv.reader(text.splitlines()))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i} has {len(row)} columns, header has {len(header)}")
        try:
            data[i - 2] = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(str(exc), i) from None
    return header, data


def load_csv(path) -> PointCloud:
    header, data = read_table(path)
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not xcols or [header[i] for i in xcols] != [f"x{j + 1}" for j in range(len(xcols))]:
        raise SchemaError(f"{path}: header must start with x1..xD, got {header}")
    known = set(xcols)
    values = None
    if "f" in header:
        values = data[:, header.index("f")]
        known.add(header.index("f"))
    pcols = [i for i, h in enumerate(header) if h.startswith("param")]
    known.update(pcols)
    unknown = [header[i] for i in range(len(header)) if i not in known]
    if unknown:
        raise SchemaError(f"{path}: unknown columns {unknown}")
    params = data[:, pcols] if pcols else None
    return PointCloud(data[:, xcols], values, params)
