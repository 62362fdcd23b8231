"""Scattered-data quadrature: weight functionals that replicate polynomial moments.

Points live in the cube [-1, 1]^d. A :class:`MomentSpec` lists, for every
multi-index k with |k|_inf <= degree, the value the functional must assign to
the basis polynomial (monomial y^k or tensor Chebyshev T_k). Weights are the
minimum-Euclidean-norm solution of the moment system, computed by an SVD based
least-squares solve.

Chebyshev moments use the probability-normalised Chebyshev measure
``prod_j dt_j / (pi * sqrt(1 - t_j^2))`` so the target for T_k is ``delta_{k,0}``;
monomial moments default to the normalised Lebesgue measure ``dt / 2^d``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as nppoly
from scipy.spatial import cKDTree

from .errors import InfeasibleMomentsError, ValidationError

BASES = ("monomial", "chebyshev")
DEFAULT_TOL = 1e-10
DEFAULT_RCOND = 1e-12
DEFAULT_COND_CAP = 1e8


def multi_indices(d: int, degree: int) -> np.ndarray:
    """All k in {0..degree}^d in lexicographic order, shape (count, d)."""
    if degree < 0:
        return np.zeros((0, d), dtype=np.int64)
    return np.array(list(itertools.product(range(degree + 1), repeat=d)), dtype=np.int64).reshape(-1, d)


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2:
        raise ValidationError("points must be a (n, d) array", "points")
    return P


def vandermonde(points, basis: str, degree: int) -> np.ndarray:
    """Moment matrix with rows indexed by k (lexicographic) and columns by points."""
    P = _as_points(points)
    n, d = P.shape
    if basis == "chebyshev":
        per_axis = [npcheb.chebvander(P[:, j], degree) for j in range(d)]
    elif basis == "monomial":
        per_axis = [nppoly.polyvander(P[:, j], degree) for j in range(d)]
    else:
        raise ValidationError(f"basis must be one of {BASES}", "basis")
    idx = multi_indices(d, degree)
    A = np.ones((idx.shape[0], n))
    for j in range(d):
        A *= per_axis[j][:, idx[:, j]].T
    return A


@dataclass(frozen=True)
class MomentSpec:
    """Moment targets for every multi-index with |k|_inf <= degree.

    ``targets`` is either a mapping ``{k-tuple: value}`` or an array aligned
    with :func:`multi_indices`; use :meth:`chebyshev` / :meth:`monomial` for
    the standard measures.
    """

    basis: str
    degree: int
    d: int
    targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValidationError(f"basis must be one of {BASES}, got {self.basis!r}", "basis")
        if self.degree < 0:
            raise ValidationError("degree must be >= 0", "degree")
        if self.d < 1:
            raise ValidationError("d must be >= 1", "d")
        idx = multi_indices(self.d, self.degree)
        t = self.targets
        if isinstance(t, dict):
            keys = {tuple(int(v) for v in k) for k in t}
            want = {tuple(k) for k in idx.tolist()}
            if keys != want:
                missing = sorted(want - keys)[:5]
                extra = sorted(keys - want)[:5]
                raise ValidationError(f"targets must list each |k|_inf <= degree exactly once "
                                      f"(missing {missing}, unexpected {extra})", "targets")
            arr = np.array([float(t[tuple(k)]) for k in idx.tolist()])
        else:
            arr = np.asarray(t, dtype=float).reshape(-1)
            if arr.shape[0] != idx.shape[0]:
                raise ValidationError(f"expected {idx.shape[0]} targets, got {arr.shape[0]}", "targets")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("targets must be finite", "targets")
        arr.setflags(write=False)
        object.__setattr__(self, "targets", arr)

    @property
    def indices(self) -> np.ndarray:
        return multi_indices(self.d, self.degree)

    @classmethod
    def chebyshev(cls, d: int, degree: int) -> "MomentSpec":
        t = np.zeros((degree + 1) ** d)
        t[0] = 1.0
        return cls("chebyshev", degree, d, t)

    @classmethod
    def monomial(cls, d: int, degree: int, targets=None) -> "MomentSpec":
        if targets is None:
            r = np.arange(degree + 1)
            one = np.where(r % 2 == 0, 1.0 / (r + 1), 0.0)
            idx = multi_indices(d, degree)
            targets = np.prod(one[idx], axis=1)
        return cls("monomial", degree, d, targets)


@dataclass(frozen=True)
class QuadratureWeights:
    """Weights on a subset (``indices``) of a point set of size ``n_points``."""

    basis: str
    degree: int
    indices: np.ndarray
    weights: np.ndarray
    residual: float
    n_points: int
    condition: float = 1.0
    exact: bool = True

    def dense(self) -> np.ndarray:
        """Weights for every point of the original set; zero off the support."""
        w = np.zeros(self.n_points)
        w[self.indices] = self.weights
        return w

    def apply(self, values) -> float:
        """The functional sum_xi w_xi f(xi) for values on the original point set."""
        values = np.asarray(values, dtype=float)
        return float(self.weights @ values[self.indices])

    def to_json(self) -> dict:
        return {
            "basis": self.basis,
            "degree": int(self.degree),
            "indices": [int(i) for i in self.indices],
            "weights": [float(w) for w in self.weights],
            "residual": float(self.residual),
            "n_points": int(self.n_points),
            "condition": float(self.condition),
            "exact": bool(self.exact),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QuadratureWeights":
        try:
            idx = np.asarray(obj["indices"], dtype=np.int64)
            w = np.asarray(obj["weights"], dtype=float)
            if idx.shape != w.shape:
                raise ValidationError("indices and weights differ in length", "weights")
            n_points = int(obj.get("n_points", int(idx.max()) + 1 if idx.size else 0))
            return cls(str(obj["basis"]), int(obj["degree"]), idx, w, float(obj["residual"]),
                       n_points, float(obj.get("condition", 1.0)), bool(obj.get("exact", True)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad weights JSON: {exc}", "weights") from None


# ---------------------------------------------------------------------------
# point-set geometry
# ---------------------------------------------------------------------------

def _refinement_grid(d: int, lo: float, hi: float, cells: int) -> np.ndarray:
    ax = np.linspace(lo, hi, cells + 1)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def fill_distance(points, metric: str = "sup", cells: int | None = None) -> float:
    """Sup-norm mesh norm of a point set in [-1, 1]^d.

    The supremum over the cube of the distance to the nearest point is taken
    over a refinement grid (256 cells per axis for d <= 2, 32 otherwise).
    ``metric="arccos"`` maps each coordinate through arccos first and measures
    in [0, pi]^d.
    """
    P = _as_points(points)
    if P.shape[0] == 0:
        raise ValidationError("fill distance of an empty set is undefined", "points")
    d = P.shape[1]
    if cells is None:
        cells = 256 if d <= 2 else 32
    if metric == "sup":
        lo, hi = -1.0, 1.0
    elif metric == "arccos":
        P = np.arccos(np.clip(P, -1.0, 1.0))
        lo, hi = 0.0, math.pi
    else:
        raise ValidationError("metric must be 'sup' or 'arccos'", "metric")
    tree = cKDTree(P)
    grid = _refinement_grid(d, lo, hi, cells)
    best = 0.0
    for start in range(0, grid.shape[0], 1 << 16):
        dist, _ = tree.query(grid[start:start + (1 << 16)], k=1, p=np.inf)
        best = max(best, float(dist.max()))
    return best


def select_representatives(points, side: float | None) -> np.ndarray:
    """One point (the lowest index) per occupied subcube.

    The cube is split into K^d congruent subcubes with K = ceil(2 / side), so
    the subcube side 2/K never exceeds ``side``. ``side=None`` keeps every
    point. Returned indices are sorted.
    """
    P = _as_points(points)
    if side is None:
        return np.arange(P.shape[0])
    if not side > 0:
        raise ValidationError("subcube side must be > 0", "side")
    K = max(1, math.ceil(2.0 / side - 1e-12))
    cell = np.clip(np.floor((P + 1.0) * (K / 2.0)).astype(np.int64), 0, K - 1)
    key = np.ravel_multi_index(cell.T, (K,) * P.shape[1]) if P.shape[1] else np.zeros(P.shape[0], int)
    _, first = np.unique(key, return_index=True)
    return np.sort(first)


# ---------------------------------------------------------------------------
# moment solves
# ---------------------------------------------------------------------------

def _solve(A: np.ndarray, b: np.ndarray, rcond: float):
    s = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    x, *_ = np.linalg.lstsq(A, b, rcond=rcond)
    resid = float(np.max(np.abs(A @ x - b))) if b.size else 0.0
    k = min(A.shape)
    rank = int(np.sum(s > rcond * s[0])) if s.size and s[0] > 0 else 0
    if k == 0 or s.size < k or s[k - 1] == 0:
        cond = math.inf
    else:
        cond = float(s[0] / s[k - 1])
    return x, resid, rank, cond


def solve_moments(points, spec: MomentSpec, *, indices=None, n_points: int | None = None,
                  tol: float = DEFAULT_TOL, rcond: float = DEFAULT_RCOND) -> QuadratureWeights:
    """Minimum-norm weights on ``points`` replicating the moments of ``spec``.

    Parameters
    ----------
    points : (n, d) array
        The selected support points.
    spec : MomentSpec
    indices : array of int, optional
        Indices of ``points`` in a larger set; stored on the result so
        :meth:`QuadratureWeights.dense` can scatter back. Defaults to
        ``arange(n)``.
    n_points : int, optional
        Size of the larger set (default ``n``).
    tol : float
        Residual (max row violation) above which the result is not exact.
    rcond : float
        Relative singular value cut-off of the least-squares solve.

    Raises
    ------
    InfeasibleMomentsError
        The system is rank deficient and its least-squares residual exceeds
        ``tol``.
    """
    P = _as_points(points)
    if P.shape[0] == 0:
        raise InfeasibleMomentsError("no support points", math.inf)
    if P.shape[1] != spec.d:
        raise ValidationError(f"points have dimension {P.shape[1]}, spec expects {spec.d}", "points")
    A = vandermonde(P, spec.basis, spec.degree)
    x, resid, rank, cond = _solve(A, spec.targets, rcond)
    exact = resid <= tol
    if not exact and rank < A.shape[0]:
        raise InfeasibleMomentsError(
            f"moment system of degree {spec.degree} is rank deficient ({rank} < {A.shape[0]} rows) "
            f"with residual {resid:.3g}", resid)
    idx = np.arange(P.shape[0]) if indices is None else np.asarray(indices, dtype=np.int64)
    n_total = P.shape[0] if n_points is None else int(n_points)
    return QuadratureWeights(spec.basis, spec.degree, idx, x, resid, n_total, cond, exact)


def _default_spec(basis: str, d: int, degree: int) -> MomentSpec:
    return MomentSpec.chebyshev(d, degree) if basis == "chebyshev" else MomentSpec.monomial(d, degree)


def exactness_degree_search(points, basis: str = "chebyshev", start_degree: int = 8, *,
                            tol: float = DEFAULT_TOL, cond_cap: float = DEFAULT_COND_CAP,
                            rcond: float = DEFAULT_RCOND) -> int:
    """Largest degree <= start_degree whose moment system is solvable and well conditioned.

    Degrees are tried downward from ``start_degree``; the first one with
    residual <= ``tol`` and condition estimate <= ``cond_cap`` is returned.
    Degrees whose system has more rows than there are points are skipped
    without a solve since they cannot be well conditioned.
    """
    P = _as_points(points)
    n, d = P.shape
    if n == 0:
        raise ValidationError("points must be nonempty", "points")
    for deg in range(max(start_degree, 0), 0, -1):
        if (deg + 1) ** d > n:
            continue
        A = vandermonde(P, basis, deg)
        spec = _default_spec(basis, d, deg)
        _, resid, _, cond = _solve(A, spec.targets, rcond)
        if resid <= tol and cond <= cond_cap:
            return deg
    return 0


def scattered_weights(points, basis: str = "chebyshev", degree: int = 0, *, side: float | None = None,
                      tol: float = DEFAULT_TOL, rcond: float = DEFAULT_RCOND) -> QuadratureWeights:
    """Select representatives (one per subcube of the given side) and solve for weights.

    The result is indexed into the full point set, with zeros off the
    selected subset.
    """
    P = _as_points(points)
    sel = select_representatives(P, side)
    spec = _default_spec(basis, P.shape[1], degree)
    return solve_moments(P[sel], spec, indices=sel, n_points=P.shape[0], tol=tol, rcond=rcond)
