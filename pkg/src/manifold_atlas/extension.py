"""Pre-image recovery and out-of-sample extension.

Pre-image: per chart, each ambient coordinate is fitted as a Chebyshev model of
y = Phi(x) over the chart's data, giving an approximate inverse of Phi.

Extension: a :class:`TubularChart` appends s - d normal coordinates to Phi;
:func:`msn_fit` then finds the tensor Chebyshev polynomial of coordinatewise
degree <= N in s variables that interpolates the data and minimises

    q(c) = integral |L P|^2 dmu,

with mu the normalised Chebyshev measure and L the Laplacian (default),
identity or bilaplacian in cube coordinates. Ties among minimisers are broken
by the Hessian energy, then the gradient energy, then the coefficient norm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.spatial import cKDTree

from . import _kernels
from .chart import Atlas, ChartMap
from .chebyshev import compute_coeffs
from .errors import (InfeasibleConstraintsError, InsufficientDataError, OutOfTubeError,
                     ValidationError)
from .manifold_gen import PointCloud
from .quadrature import MomentSpec, exactness_degree_search, solve_moments, vandermonde

OPERATORS = ("laplacian", "identity", "bilaplacian")


# ---------------------------------------------------------------------------
# pre-image
# ---------------------------------------------------------------------------

@dataclass
class PreImageModel:
    """``models[c][i]`` approximates ambient coordinate i on chart c.

    Each chart's fits live on the bounding box ``boxes[c] = (lo, hi)`` of its
    data in chart coordinates, mapped affinely onto [-1, 1]^d.
    """

    models: list
    boxes: list

    @property
    def ambient_dim(self) -> int:
        return len(self.models[0]) if self.models else 0

    def __call__(self, y, chart: int = 0) -> np.ndarray:
        return preimage(self, y, chart)

    def to_json(self) -> dict:
        return {"charts": [{"lo": list(map(float, lo)), "hi": list(map(float, hi)),
                            "models": [m.to_json() for m in per]}
                           for per, (lo, hi) in zip(self.models, self.boxes)]}


def _to_box(Y, lo, hi):
    return 2.0 * (Y - lo) / (hi - lo) - 1.0


def fit_preimage(atlas: Atlas, cloud: PointCloud | np.ndarray, start_n: int = 8) -> PreImageModel:
    """Fit Phi^{-1} on every chart from the chart's in-chart samples.

    One set of Chebyshev weights per chart (degree chosen as in
    :func:`chebyshev.fit_auto`) is shared by the D coordinate fits. Fits are
    made on the data's bounding box: asking the weights to integrate over
    parts of the cube the data never reaches would only inflate them.
    """
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    models, boxes = [], []
    for ci, chart in enumerate(atlas.charts):
        inside = np.flatnonzero(chart.in_chart(X))
        if inside.size == 0:
            raise InsufficientDataError(f"chart {ci} has no in-chart samples")
        Y = chart.phi(X[inside])
        lo, hi = Y.min(axis=0), Y.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        U = _to_box(Y, lo, hi)
        E = exactness_degree_search(U, "chebyshev", 2 * start_n - 1)
        n = max(1, min(start_n, (E + 1) // 2))
        w = solve_moments(U, MomentSpec.chebyshev(chart.d, min(E, 2 * n - 1)))
        models.append([compute_coeffs(U, X[inside, i], n, w) for i in range(X.shape[1])])
        boxes.append((lo, hi))
    return PreImageModel(models, boxes)


def preimage(model: PreImageModel, y, chart: int = 0) -> np.ndarray:
    """Ambient points for chart coordinates y (shape (n, d)) on one chart."""
    if not 0 <= chart < len(model.models):
        raise ValidationError(f"chart index {chart} out of range", "chart")
    per = model.models[chart]
    lo, hi = model.boxes[chart]
    Y = np.asarray(y, dtype=float)
    d = per[0].d
    if Y.ndim == 1:
        Y = Y[:, None] if d == 1 else Y[None, :]
    U = _to_box(Y, lo, hi)
    return np.stack([m(U) for m in per], axis=1)


# ---------------------------------------------------------------------------
# tubular coordinates
# ---------------------------------------------------------------------------

def _normal_frame(anchor_diffs: np.ndarray, count: int) -> np.ndarray:
    """Orthonormal vectors orthogonal to the anchor differences (columns).

    Standard basis vectors are projected off the current span in order and
    kept when their remainder is not negligible.
    """
    D = anchor_diffs.shape[0]
    Q, _ = np.linalg.qr(anchor_diffs)
    basis = [Q[:, j] for j in range(Q.shape[1])]
    frame = []
    for i in range(D):
        if len(frame) == count:
            break
        v = np.zeros(D)
        v[i] = 1.0
        for _ in range(2):  # re-orthogonalise once for accuracy
            for u in basis:
                v = v - (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            basis.append(v)
            frame.append(v)
    return np.array(frame).T.reshape(D, len(frame))


@dataclass
class TubularChart:
    """Chart Phi extended by s - d scaled normal coordinates.

    The extra coordinates of x are ``frame.T @ (x - base(x)) / tube_radius``.
    base(x) is the foot of x on the local tangent plane fitted (by PCA) to
    its ``k_base`` nearest in-chart cloud points, so x - base(x) is the
    normal part of the offset and tangential motion does not leak in.
    """

    base: ChartMap
    s: int
    frame: np.ndarray
    tube_radius: float
    base_points: np.ndarray = field(repr=False)
    k_base: int = 8

    def __post_init__(self):
        self._tree = cKDTree(self.base_points)

    @property
    def d(self) -> int:
        return self.base.d

    def coords(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        Y = self.base.phi(X)
        if self.s == self.d:
            return Y
        k = min(self.k_base, self.base_points.shape[0])
        _, idx = self._tree.query(X, k=k)
        idx = np.asarray(idx).reshape(X.shape[0], k)
        nb = self.base_points[idx]
        mean = nb.mean(axis=1)
        _, _, vt = np.linalg.svd(nb - mean[:, None, :], full_matrices=False)
        T = vt[:, :self.d, :]  # (n, d, D) tangent rows
        off = X - mean
        base = mean + np.einsum("nij,ni->nj", T, np.einsum("nij,nj->ni", T, off))
        extra = (X - base) @ self.frame / self.tube_radius
        return np.hstack([Y, extra])

    def in_tube(self, x) -> np.ndarray:
        return np.max(np.abs(self.coords(x)), axis=1) <= 1.0


def build_tubular(chart: ChartMap, s: int, cloud: PointCloud | np.ndarray,
                  tube_radius: float | None = None, k_base: int = 8) -> TubularChart:
    """Tubular chart of dimension s around ``chart`` (d <= s <= D).

    ``tube_radius`` scales the normal coordinates into [-1, 1]; it defaults
    to a quarter of the chart's locality radius (or of the anchor distance
    when the radius is unbounded).
    """
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    D = X.shape[1]
    d = chart.d
    if not d <= s:
        raise ValidationError(f"s must be >= d = {d}", "s")
    if s > D:
        raise ValidationError(f"s must be <= ambient dimension {D}", "s")
    inside = np.flatnonzero(chart.in_chart(X))
    if inside.size == 0:
        raise InsufficientDataError("chart has no in-chart samples")
    diffs = (np.atleast_2d(chart.anchors) - chart.center).T
    frame = _normal_frame(diffs, s - d)
    if frame.shape[1] != s - d:
        raise ValidationError("could not build a normal frame of the requested size", "s")
    if tube_radius is None:
        scale = chart.radius if math.isfinite(chart.radius) else float(np.max(np.linalg.norm(diffs, axis=0)))
        tube_radius = 0.25 * scale
    if not tube_radius > 0:
        raise ValidationError("tube_radius must be > 0", "tube_radius")
    return TubularChart(chart, s, frame, float(tube_radius), X[inside], k_base)


# ---------------------------------------------------------------------------
# minimal Sobolev norm interpolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MSNProblem:
    points: np.ndarray
    values: np.ndarray
    N: int
    operator: str = "laplacian"
    quad_order: int | None = None

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if P.shape[0] != v.shape[0]:
            raise ValidationError("points and values differ in length", "values")
        if P.shape[0] == 0:
            raise ValidationError("no constraints", "points")
        if self.operator not in OPERATORS:
            raise ValidationError(f"operator must be one of {OPERATORS}", "operator")
        if self.N < 0:
            raise ValidationError("N must be >= 0", "N")
        q = self.quad_order if self.quad_order is not None else 2 * self.N + 2
        if q < self.N + 1:
            raise ValidationError("quadrature order must be >= N + 1", "quad_order")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "quad_order", int(q))

    @property
    def s(self) -> int:
        return self.points.shape[1]

    @property
    def dim(self) -> int:
        return (self.N + 1) ** self.s


@dataclass(frozen=True)
class MSNPolynomial:
    coeffs: np.ndarray  # shape (N+1,)*s
    objective: float
    kkt_residual: float
    constraint_residual: float
    q_norm: float
    mode: str = "interpolation"

    @property
    def s(self) -> int:
        return self.coeffs.ndim

    @property
    def N(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, y) -> np.ndarray:
        Y = np.asarray(y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None] if self.s == 1 else Y[None, :]
        return _kernels.clenshaw_eval(self.coeffs, Y)

    def to_json(self) -> dict:
        return {"N": self.N, "s": self.s, "coeffs": [float(v) for v in self.coeffs.ravel()],
                "objective": self.objective, "kkt_residual": self.kkt_residual,
                "constraint_residual": self.constraint_residual, "mode": self.mode}


def choose_degree(n_constraints: int, s: int, slack: int = 5) -> int:
    """Smallest N >= 1 with (N + 1)^s >= n_constraints + slack."""
    N = 1
    while (N + 1) ** s < n_constraints + slack:
        N += 1
    return N


def _derivative_tables(N: int, q: int, orders=(0, 1, 2, 4)) -> dict:
    """d^r T_k / dt^r at the q Gauss-Chebyshev nodes, one (q, N+1) table per order r."""
    nodes = np.cos((2 * np.arange(q) + 1) * np.pi / (2 * q))
    eye = np.eye(N + 1)
    V = {0: npcheb.chebvander(nodes, N)}
    for r in orders:
        if r:
            V[r] = np.stack([npcheb.chebval(nodes, npcheb.chebder(eye[k], r)) if k >= r else
                             np.zeros(q) for k in range(N + 1)], axis=1)
    return V


def _kron_all(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def _partial(V: dict, s: int, orders) -> np.ndarray:
    """Mixed partial derivative with per-axis orders ``orders`` on the tensor grid."""
    return _kron_all([V[orders[t]] for t in range(s)])


def _unit(s: int, *axes) -> list:
    o = [0] * s
    for a in axes:
        o[a] += 1
    return o


def _operator_matrix(N: int, s: int, operator: str, q: int) -> np.ndarray:
    """R = sqrt(weights) * L on the tensor Gauss-Chebyshev grid, so q(c) = ||R c||^2."""
    V = _derivative_tables(N, q)
    if operator == "identity":
        L = _partial(V, s, [0] * s)
    elif operator == "laplacian":
        L = sum(_partial(V, s, [2 if t == i else 0 for t in range(s)]) for i in range(s))
    elif operator == "bilaplacian":
        L = 0
        for i, j in itertools.product(range(s), repeat=2):
            L = L + _partial(V, s, [4 if t == i else 0 for t in range(s)] if i == j else
                             [2 if t in (i, j) else 0 for t in range(s)])
    else:
        raise ValidationError(f"operator must be one of {OPERATORS}", "operator")
    return L / math.sqrt(q ** s)


def _seminorm_roots(N: int, s: int, q: int) -> list:
    """Roots of the Hessian and gradient energies, used to break ties in that order."""
    V = _derivative_tables(N, q, orders=(0, 1, 2))
    scale = 1.0 / math.sqrt(q ** s)
    hess = [_partial(V, s, [2 if t == i else 0 for t in range(s)] if i == j else _unit(s, i, j))
            for i in range(s) for j in range(i, s)]
    grad = [_partial(V, s, _unit(s, i)) for i in range(s)]
    return [scale * np.vstack(hess), scale * np.vstack(grad)]


def _dedupe(P: np.ndarray, f: np.ndarray, tol: float = 1e-12):
    tree = cKDTree(P)
    pairs = sorted(tree.query_pairs(tol, p=np.inf))
    conflicts = [(int(i), int(j)) for i, j in pairs if abs(f[i] - f[j]) > tol * max(1.0, abs(f[i]))]
    if conflicts:
        raise InfeasibleConstraintsError(
            f"{len(conflicts)} duplicated constraint points carry conflicting values: {conflicts[:10]}",
            conflicts)
    drop = {j for _, j in pairs}
    keep = np.array([i for i in range(P.shape[0]) if i not in drop], dtype=np.int64)
    return P[keep], f[keep]


def _nullspace(A: np.ndarray, rcond: float = 1e-12):
    u, sv, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > rcond * sv[0])) if sv.size and sv[0] > 0 else 0
    return vt[rank:].T, rank


def _restrict(c: np.ndarray, Z: np.ndarray, R: np.ndarray, rcond: float):
    """Minimise ||R (c + Z z)|| over z; return the new c and the directions keeping it minimal."""
    if Z.shape[1] == 0:
        return c, Z
    M = R @ Z
    z, *_ = np.linalg.lstsq(M, -(R @ c), rcond=rcond)
    _, sv, vt = np.linalg.svd(M, full_matrices=True)
    top = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > rcond * max(top, np.linalg.norm(R, 2)))) if top > 0 else 0
    return c + Z @ z, Z @ vt[rank:].T


def msn_fit(problem: MSNProblem, *, rcond: float = 1e-12, tie_rcond: float = 1e-10) -> MSNPolynomial:
    """Minimal Sobolev norm polynomial for the given constraints.

    With A the constraint matrix, the least-squares solutions of A c = f form
    c_p + null(A). The objective ||R c||^2 is minimised over that affine set.
    The operator has a large nullspace (harmonic polynomials for the
    Laplacian), so ties are broken lexicographically: among minimisers take
    the smallest Hessian energy, then the smallest gradient energy (both
    integrated against the Chebyshev measure), then the smallest ||c||. Data
    from a polynomial annihilated by all of these (constants, and linear
    functions for the derivative energies) is reproduced exactly. When A has
    full row rank the constraints hold exactly (interpolation mode);
    otherwise the result is flagged as least-squares mode.

    Raises
    ------
    InfeasibleConstraintsError
        Duplicate points with different values.
    """
    P, f = _dedupe(problem.points, problem.values)
    if np.any(np.abs(P) > 1 + 1e-12):
        raise ValidationError("constraint points must lie in [-1, 1]^s", "points")
    s, N = problem.s, problem.N
    A = vandermonde(P, "chebyshev", N).T
    R = _operator_matrix(N, s, problem.operator, problem.quad_order)
    c, *_ = np.linalg.lstsq(A, f, rcond=rcond)
    Z, rank = _nullspace(A, rcond)
    mode = "interpolation" if rank == A.shape[0] else "least-squares"
    c, Z = _restrict(c, Z, R, tie_rcond)
    for T in _seminorm_roots(N, s, problem.quad_order):
        c, Z = _restrict(c, Z, T, tie_rcond)
    if Z.shape[1]:
        c = c - Z @ (Z.T @ c)
    Q = R.T @ R
    grad = 2.0 * Q @ c
    if mode == "interpolation":
        lam, *_ = np.linalg.lstsq(A.T, grad, rcond=rcond)
        kkt = float(np.max(np.abs(grad - A.T @ lam)))
    else:
        # stationarity of the objective within the least-squares solution set
        Z0, _ = _nullspace(A, rcond)
        kkt = float(np.max(np.abs(Z0.T @ grad))) if Z0.shape[1] else 0.0
    resid = float(np.max(np.abs(A @ c - f)))
    return MSNPolynomial(c.reshape((N + 1,) * s), float(np.sum((R @ c) ** 2)), kkt, resid,
                         float(np.linalg.norm(Q, 2)), mode)


def msn_objective(poly: MSNPolynomial, operator: str = "laplacian", quad_order: int | None = None) -> float:
    """q(c) for an arbitrary coefficient tensor (used for optimality probes)."""
    q = quad_order if quad_order is not None else 2 * poly.N + 2
    R = _operator_matrix(poly.N, poly.s, operator, q)
    return float(np.sum((R @ poly.coeffs.ravel()) ** 2))


def constraint_matrix(points, N: int) -> np.ndarray:
    return vandermonde(np.asarray(points, dtype=float), "chebyshev", N).T


def operator_root(N: int, s: int, operator: str = "laplacian", quad_order: int | None = None) -> np.ndarray:
    """R with q(c) = ||R c||^2."""
    return _operator_matrix(N, s, operator, quad_order if quad_order is not None else 2 * N + 2)


def extend_evaluate(msn: MSNPolynomial, tubular: TubularChart, x) -> np.ndarray:
    """P*(Phi_s(x)); raises OutOfTubeError when Phi_s(x) leaves the cube."""
    Y = tubular.coords(x)
    if Y.shape[1] != msn.s:
        raise ValidationError(f"tubular chart has s={Y.shape[1]}, polynomial has s={msn.s}", "s")
    bad = np.max(np.abs(Y), axis=1) > 1.0
    if bad.any():
        raise OutOfTubeError(f"{int(bad.sum())} query points lie outside the tube", Y[bad])
    return msn(Y)


MAX_EXTENSION_COEFFS = 4096


def spread_subset(Y: np.ndarray, k: int) -> np.ndarray:
    """Indices of ``k`` well-spread rows of Y by greedy farthest-point selection.

    Starts from the row with the smallest first coordinate (lowest index on
    ties); distances are sup-norm. Returns all rows, in order, when k >= len(Y).
    """
    n = Y.shape[0]
    if k >= n:
        return np.arange(n)
    chosen = [int(np.argmin(Y[:, 0]))]
    dist = np.max(np.abs(Y - Y[chosen[0]]), axis=1)
    while len(chosen) < k:
        j = int(np.argmax(dist))
        chosen.append(j)
        dist = np.minimum(dist, np.max(np.abs(Y - Y[j]), axis=1))
    return np.sort(np.array(chosen, dtype=np.int64))


def fit_extension(tubular: TubularChart, points, values, *, N: int | None = None,
                  operator: str = "laplacian", slack: int = 5,
                  max_constraints: int | None = 12) -> MSNPolynomial:
    """MSN fit on Phi_s of the given ambient samples (those inside the tube).

    The samples lie near a d-dimensional set inside the s-cube, so they pin
    down only about (N + 1)^d independent directions of the polynomial space.
    Using all of them, or sizing N by (N + 1)^s, gives nearly dependent
    constraints and huge coefficients. Instead at most ``max_constraints``
    well-spread samples are kept (:func:`spread_subset`) and, when N is not
    given, N = choose_degree(count, d, slack).
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    f = np.asarray(values, dtype=float).reshape(-1)
    Y = tubular.coords(X)
    ok = np.max(np.abs(Y), axis=1) <= 1.0
    if not ok.any():
        raise InsufficientDataError("no samples inside the tube")
    Y, f = Y[ok], f[ok]
    if max_constraints is not None:
        if max_constraints < 1:
            raise ValidationError("max_constraints must be >= 1", "max_constraints")
        keep = spread_subset(Y, max_constraints)
        Y, f = Y[keep], f[keep]
    if N is None:
        N = choose_degree(Y.shape[0], tubular.d, slack)
    if (N + 1) ** tubular.s > MAX_EXTENSION_COEFFS:
        raise ValidationError(f"(N + 1)^s = {(N + 1) ** tubular.s} coefficients exceeds "
                              f"{MAX_EXTENSION_COEFFS}; lower N, s or max_constraints", "N")
    return msn_fit(MSNProblem(Y, f, N, operator))
