"""End-to-end driver: atlas, per-chart models, prediction and convergence tables.

A pipeline fit runs three stages:

1. build an atlas of distance-based charts over the cloud;
2. map each chart's in-chart samples to the cube and fit a spline or
   Chebyshev model there;
3. predict at new ambient points by locating the owning chart and evaluating
   its model at Phi(x).

Per-chart models are fitted on the bounding box of the chart's mapped data,
affinely stretched onto [-1, 1]^d, so charts whose data does not reach every
face of the cube still get well-posed moment systems.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .bspline import SplineModel, fit_scattered
from .chart import Atlas, ChartMap, StarPolicy, build_atlas, make_chart
from .chebyshev import ChebModel, fit_auto, fit_fixed
from .errors import (AtlasError, OutOfCoverageError, UnsupportedOperationError,
                     ValidationError)
from .manifold_gen import (ManifoldSpec, PointCloud, embed_params, parse_field, sample_field,
                           smooth_family)

METHODS = ("cheb", "spline")
# how far (in box units) a Chebyshev chart model may extrapolate past its data
CHEB_EXTRAPOLATION = 1.25


@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline settings.

    ``n`` is the Chebyshev degree parameter: an integer, or ``"auto"`` to let
    the data decide up to ``start_n``. ``m`` and ``h`` are the spline order
    and scale. The remaining fields are passed to :class:`StarPolicy`.
    """

    dim: int = 1
    method: str = "cheb"
    n: int | str = "auto"
    start_n: int = 16
    m: int = 4
    h: float = 0.0625
    seed: int = 0
    k_neighbors: int = 32
    c1: float = 2.0
    c2: float = 4.0
    gamma_min: float = 0.1
    coverage_fraction: float = 0.8
    spread_bound: float = 10.0
    radius_factor: float = 0.6
    fallback_tol: float = 1.5

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError("dim must be an integer >= 1", "dim")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}", "method")
        if self.n != "auto":
            try:
                n = int(self.n)
            except (TypeError, ValueError):
                raise ValidationError("n must be a positive integer or 'auto'", "n") from None
            if n < 1:
                raise ValidationError("n must be a positive integer or 'auto'", "n")
            object.__setattr__(self, "n", n)
        if self.start_n < 1:
            raise ValidationError("start_n must be >= 1", "start_n")
        if int(self.m) != self.m or self.m < 2:
            raise ValidationError("m must be an integer >= 2", "m")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValidationError("h must be a positive number", "h")
        if self.fallback_tol < 1:
            raise ValidationError("fallback_tol must be >= 1", "fallback_tol")
        self.policy()  # validates the chart knobs

    def policy(self) -> StarPolicy:
        return StarPolicy(k_neighbors=self.k_neighbors, c1=self.c1, c2=self.c2, gamma_min=self.gamma_min,
                          coverage_fraction=self.coverage_fraction, spread_bound=self.spread_bound,
                          radius_factor=self.radius_factor)


@dataclass
class ChartModel:
    """A fitted model on one chart, living on the box [lo, hi] of chart coordinates.

    Queries are mapped to the box's cube coordinates and clamped. Held-out
    points often fall in the small gap between the last training sample of
    one chart and the first of the next, so Chebyshev models may extrapolate
    a short way (to +-CHEB_EXTRAPOLATION), where a smooth low-degree series is
    still accurate. Spline models are clamped to [-1, 1] since their shift
    grid ends there.
    """

    model: ChebModel | SplineModel
    lo: np.ndarray
    hi: np.ndarray

    def to_box(self, Y) -> np.ndarray:
        U = 2.0 * (np.atleast_2d(Y) - self.lo) / (self.hi - self.lo) - 1.0
        limit = CHEB_EXTRAPOLATION if isinstance(self.model, ChebModel) else 1.0
        return np.clip(U, -limit, limit)

    def __call__(self, Y) -> np.ndarray:
        return self.model(self.to_box(Y))

    def to_json(self) -> dict:
        return {"lo": [float(v) for v in self.lo], "hi": [float(v) for v in self.hi],
                "model": self.model.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "ChartModel":
        m = obj["model"]
        model = SplineModel.from_json(m) if m.get("method") == "spline" else ChebModel.from_json(m)
        return cls(model, np.asarray(obj["lo"], dtype=float), np.asarray(obj["hi"], dtype=float))


@dataclass
class FitReport:
    charts: list = field(default_factory=list)
    seconds: float = 0.0

    def to_json(self, timing: bool = True) -> dict:
        out = {"charts": self.charts, "n_charts": len(self.charts)}
        if timing:
            out["seconds"] = self.seconds
        return out


@dataclass
class PipelineResult:
    atlas: Atlas
    models: list
    report: FitReport
    config: PipelineConfig

    def predict(self, X):
        return predict(self, X)

    def to_json(self) -> dict:
        return {"config": asdict(self.config), "atlas": self.atlas.to_json(),
                "models": [m.to_json() for m in self.models]}

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineResult":
        try:
            cfg = PipelineConfig(**obj["config"])
            atlas = Atlas.from_json(obj["atlas"])
            models = [ChartModel.from_json(m) for m in obj["models"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad pipeline JSON: {exc}", "model") from None
        return cls(atlas, models, FitReport(), cfg)


def _with_chart_context(exc: AtlasError, ci: int) -> AtlasError:
    exc.args = (f"chart {ci}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    return exc


def fit_chart_model(Y: np.ndarray, f: np.ndarray, config: PipelineConfig) -> tuple[ChartModel, dict]:
    """Fit the configured method on chart coordinates Y (shape (n, d))."""
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    U = 2.0 * (Y - lo) / (hi - lo) - 1.0
    if config.method == "cheb":
        if config.n == "auto":
            model = fit_auto(U, f, config.start_n)
        else:
            model = fit_fixed(U, f, int(config.n))
        info = {"n": model.n, "exactness_degree": int(model.weights.degree),
                "residual": float(model.weights.residual), "condition": float(model.weights.condition)}
    else:
        model = fit_scattered(U, f, config.m, config.h)
        info = {"m": model.m, "h": model.h, "exactness_degree": model.m - 1,
                "residual": float(model.max_residual), "shifts": len(model.shift_weights)}
    return ChartModel(model, lo, hi), info


def fit_pipeline(cloud: PointCloud, config: PipelineConfig = PipelineConfig(),
                 heldout: PointCloud | None = None) -> PipelineResult:
    """Atlas plus one model per chart; optional held-out error per chart.

    Raises ValidationError when the cloud has no values. Numerical errors
    from a chart's fit are re-raised with the chart index in the message.
    """
    if cloud.values is None:
        raise ValidationError("the cloud has no values to fit", "values")
    t0 = time.perf_counter()
    atlas = build_atlas(cloud, config.dim, config.policy())
    X, f = cloud.points, cloud.values
    models, rows = [], []
    for ci, chart in enumerate(atlas.charts):
        inside = np.flatnonzero(chart.in_chart(X))
        try:
            cm, info = fit_chart_model(chart.phi(X[inside]), f[inside], config)
        except AtlasError as exc:
            raise _with_chart_context(exc, ci)
        models.append(cm)
        rows.append({"chart": ci, "n_points": int(inside.size),
                     "n_assigned": int(np.sum(atlas.assignment == ci)), **info})
    result = PipelineResult(atlas, models, FitReport(rows), config)
    if heldout is not None and heldout.values is not None:
        idx, _ = _owners(atlas, models, heldout.points, config.fallback_tol)
        for ci, row in enumerate(rows):
            sel = np.flatnonzero(idx == ci)
            if sel.size:
                pred = models[ci](atlas.charts[ci].phi(heldout.points[sel]))
                row["heldout_max_error"] = float(np.max(np.abs(pred - heldout.values[sel])))
                row["heldout_points"] = int(sel.size)
            else:
                row["heldout_max_error"] = None
                row["heldout_points"] = 0
    result.report.seconds = time.perf_counter() - t0
    return result


def _owners(atlas: Atlas, models: list, X: np.ndarray, fallback_tol: float):
    """Owning chart per point.

    Among the charts containing x whose training box holds Phi(x), the one
    where x sits deepest (smallest sup-norm in box coordinates) wins, ties
    going to the lower index, since fits are least accurate at their box
    faces. A chart that contains x but saw no training data around it is
    only used when no other chart does. Points outside every chart go
    through :meth:`Atlas.locate`'s fallback.
    """
    idx, fallback = atlas.locate(X, fallback_tol)
    best = np.full(X.shape[0], -1)
    depth = np.full(X.shape[0], np.inf)
    for ci, (chart, cm) in enumerate(zip(atlas.charts, models)):
        U = 2.0 * (chart.phi(X) - cm.lo) / (cm.hi - cm.lo) - 1.0
        u = np.max(np.abs(U), axis=1)
        take = chart.in_chart(X) & (u <= 1.0 + 1e-12) & (u < depth)
        best = np.where(take, ci, best)
        depth = np.where(take, u, depth)
    idx = np.where((best >= 0) & ~fallback, best, idx)
    return idx, fallback


def predict(result: PipelineResult, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values, owning chart and fallback flag for ambient points X.

    Raises OutOfCoverageError if some point has no chart within the
    fallback tolerance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    idx, fallback = _owners(result.atlas, result.models, X, result.config.fallback_tol)
    missing = np.flatnonzero(idx < 0)
    if missing.size:
        raise OutOfCoverageError(f"{missing.size} query points are outside every chart: "
                                 f"{missing[:10].tolist()}")
    out = np.empty(X.shape[0])
    for ci in np.unique(idx):
        sel = np.flatnonzero(idx == ci)
        out[sel] = result.models[ci](result.atlas.charts[ci].phi(X[sel]))
    return out, idx, fallback


# ---------------------------------------------------------------------------
# convergence harness
# ---------------------------------------------------------------------------

def curve_chart(spec: ManifoldSpec, p0: float | None = None, offset: float = 5 * math.pi / 16,
                half_width: float = math.pi / 8) -> ChartMap:
    """Single-anchor chart on a helix or circle, centred at parameter p0.

    The anchor sits ``offset`` further along (scaled by the radius for
    circles, so arclengths match the helix case). Beta is the excursion of Psi
    at ``p0 + half_width``, on the anchor side, so the cube face there is hit
    well before Psi turns at the anchor; the opposite face is reached a little
    inside ``p0 - half_width``. The pulled-back parametrisation then stays
    smooth with bounded derivatives on the whole cube.
    """
    if spec.kind not in ("helix", "circle"):
        raise UnsupportedOperationError(f"convergence runs need a curve, got {spec.kind!r}")
    scale = 1.0 if spec.kind == "helix" else 1.0 / spec.radius
    if p0 is None:
        p0 = 2.0 * math.pi if spec.kind == "helix" else math.pi
    center, anchor, end = embed_params(spec, [p0, p0 + offset * scale, p0 + half_width * scale])
    psi0 = float(np.sum((center - anchor) ** 2))
    beta = abs(float(np.sum((end - anchor) ** 2)) - psi0)
    return make_chart(center, anchor[None, :], beta, float(np.linalg.norm(anchor - center)))


def chart_param_range(spec: ManifoldSpec, chart: ChartMap, p0: float, scale: float = 1.0):
    """Parameter interval around p0 that the chart maps onto [-1, 1] (monotone branch)."""
    def g(p, target):
        return float(chart.phi(embed_params(spec, [p]))[0, 0]) - target

    step = math.pi / 64 * scale
    bounds = []
    for direction in (-1.0, 1.0):
        target = float(np.sign(g(p0 + direction * step, 0.0)))
        p_prev, p = p0, p0 + direction * step
        while abs(g(p, 0.0)) < 1.0:
            p_prev, p = p, p + direction * step
            if abs(p - p0) > 4 * math.pi * scale:
                raise ValidationError("chart image does not reach the cube faces", "chart")
        bounds.append(brentq(g, min(p_prev, p), max(p_prev, p), args=(target,), xtol=1e-15))
    return min(bounds), max(bounds)


@dataclass(frozen=True)
class ConvergenceRow:
    method: str
    order: int
    param: float
    error: float
    ratio: float
    slope: str


def _slope(xs, errs) -> str:
    errs = np.asarray(errs, dtype=float)
    if np.all(errs <= 1e-10):
        return "exact"
    keep = errs > 1e-12
    if keep.sum() < 2:
        return "exact"
    return repr(float(np.polyfit(np.log(np.asarray(xs, dtype=float)[keep]), np.log(errs[keep]), 1)[0]))


def _field_values(name, param, X, t, knot):
    # same fields as sample_field, with the smooth-family knot pinned to the
    # chart interval so training and evaluation agree
    if name == "smooth":
        return smooth_family(t, int(param), knot)
    return sample_field(PointCloud(X, None, t[:, None]), name, param).values


def run_convergence(spec: ManifoldSpec, field: str, method: str, grid, *, m: int = 2,
                    n_eval: int = 2001) -> list[ConvergenceRow]:
    """Interior max error of one method over a parameter grid.

    Protocol: a single curve chart (see :func:`curve_chart`); ``spec.n``
    parameters drawn uniformly (seed ``spec.seed``) from the interval the
    chart maps onto [-1, 1]; the field evaluated exactly at those points;
    errors measured on ``n_eval`` uniform parameters of the same interval.
    Spline errors use the interior |y| <= 1 - m h_max, one region shared by
    the whole sweep so errors are compared on the same set; Chebyshev errors
    use the whole cube. The slope is the least-squares slope of log error against log h
    (spline) or log n (cheb), so spline slopes are positive and Chebyshev
    slopes negative when errors decrease.
    """
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}", "method")
    grid = list(grid)
    if not grid:
        raise ValidationError("empty parameter grid", "grid")
    name, fparam = parse_field(field)
    chart = curve_chart(spec)
    scale = 1.0 if spec.kind == "helix" else 1.0 / spec.radius
    p0 = 2.0 * math.pi if spec.kind == "helix" else math.pi
    lo, hi = chart_param_range(spec, chart, p0, scale)
    rng = np.random.default_rng(spec.seed)
    params = rng.uniform(lo, hi, size=spec.n)
    X = embed_params(spec, params)
    Y = chart.phi(X)
    f = _field_values(name, fparam, X, params, 0.5 * (lo + hi))
    p_eval = np.linspace(lo, hi, n_eval)
    X_eval = embed_params(spec, p_eval)
    truth = _field_values(name, fparam, X_eval, p_eval, 0.5 * (lo + hi))
    Y_eval = chart.phi(X_eval)
    interior = 1.0 - m * max(float(g) for g in grid) if method == "spline" else 1.0
    if interior <= 0:
        raise ValidationError("m * h must stay below 1 for an interior region to exist", "h")
    errors = []
    for g in grid:
        if method == "spline":
            h = float(g)
            model = fit_scattered(Y, f, m, h)
            mask = np.max(np.abs(Y_eval), axis=1) <= interior
            err = float(np.max(np.abs(model(Y_eval[mask]) - truth[mask])))
        else:
            n = int(g)
            model = fit_fixed(Y, f, n)
            err = float(np.max(np.abs(model(Y_eval) - truth)))
        errors.append(err)
    slope = _slope(grid, errors)
    rows = []
    for i, (g, e) in enumerate(zip(grid, errors)):
        ratio = e / errors[i - 1] if i and errors[i - 1] > 0 else float("nan")
        rows.append(ConvergenceRow(method, m if method == "spline" else 0, float(g), e, ratio, slope))
    return rows


def convergence_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("method,order,param,error,ratio,slope\n")
    for r in rows:
        buf.write(f"{r.method},{r.order},{r.param!r},{r.error!r},{r.ratio!r},{r.slope}\n")
    return buf.getvalue()
