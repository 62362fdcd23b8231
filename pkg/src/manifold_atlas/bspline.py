"""Tensor-product cardinal B-splines and scattered-data quasi-interpolation.

Conventions
-----------
N_m is the order-m cardinal B-spline: degree m - 1, support [0, m], knots at
the integers. The tensor version is the product of univariate factors.

The quasi-interpolant at scale h is

    Q_{m,h}(f)(y) = sum_k lambda(f(h(. + k))) N_m(y/h - k + m/2),

with lambda(g) = sum_j c_j g(j) a symmetric point stencil (see
:func:`lambda_star`). ``N_m(. + m/2)`` is centred at the origin, so shift k
owns the cell around h*k. The scattered version replaces lambda by a local
quadrature functional on the data near h*k that reproduces the stencil's
action on polynomials of coordinatewise degree <= m - 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import CoverageError, InfeasibleMomentsError, NumericalError, ValidationError
from .quadrature import MomentSpec, QuadratureWeights, multi_indices, solve_moments

MAX_STENCIL_ORDER = 12


def _check_m(m) -> int:
    if int(m) != m or m < 2:
        raise ValidationError("spline order m must be an integer >= 2", "m")
    return int(m)


def bspline_1d(m: int, t) -> np.ndarray:
    """Univariate N_m at the points ``t``."""
    return _kernels.bspline_values(_check_m(m), np.asarray(t, dtype=float).reshape(-1))


def bspline_truncated_power(m: int, t: float) -> float:
    """N_m(t) from the alternating truncated-power sum, in exact rationals.

    ``t`` is converted with :class:`fractions.Fraction`, so the result is the
    correctly rounded value of the formula at that binary input. Slow; meant
    as a reference.
    """
    return float(_bspline_exact(_check_m(m), Fraction(t)))


def eval_bspline(m: int, d: int, y) -> np.ndarray:
    """Tensor N_m(y) = prod_i N_m(y_i) for y of shape (n, d) or (d,)."""
    m = _check_m(m)
    Y = np.asarray(y, dtype=float)
    scalar = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != d:
        raise ValidationError(f"expected points of dimension {d}, got {Y.shape[1]}", "y")
    out = np.ones(Y.shape[0])
    for i in range(d):
        out *= _kernels.bspline_values(m, Y[:, i])
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# lambda* stencil
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaStencil:
    """Point functional lambda(g) = sum_j coeffs[j] * g(offsets[j])."""

    m: int
    d: int
    offsets: np.ndarray
    coeffs: np.ndarray

    def apply(self, g) -> float:
        return float(np.dot(self.coeffs, [g(np.asarray(o, dtype=float)) for o in self.offsets]))

    def moment(self, r) -> float:
        """lambda applied to the monomial y^r (multi-index r)."""
        r = np.asarray(r)
        return float(np.dot(self.coeffs, np.prod(self.offsets.astype(float) ** r, axis=1)))


def _bspline_exact(m: int, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for k in range(m + 1):
        u = x - k
        if u > 0:
            acc += (-1) ** k * math.comb(m, k) * u ** (m - 1)
    return acc / math.factorial(m - 1)


def _solve_exact(A: list, b: list) -> list:
    """Solve the consistent system A x = b through its normal equations, exactly."""
    n = len(A[0])
    M = [[sum(r[i] * r[j] for r in A) for j in range(n)] + [sum(r[i] * v for r, v in zip(A, b))]
         for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise NumericalError("singular stencil reproduction system")
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    x = [M[i][n] / M[i][i] for i in range(n)]
    if any(sum(a * v for a, v in zip(row, x)) != rhs for row, rhs in zip(A, b)):
        raise NumericalError("stencil reproduction system is inconsistent")
    return x


def _univariate_stencil_exact(m: int) -> list:
    K = (m - 1) // 2
    # Q_m reproduces t^r for r < m iff, for every y,
    #   sum_j c_j sum_k (j + k)^r N_m(y - k + m/2) = y^r.
    # Collocate at rational y in one period and solve for the symmetric c.
    ys = [Fraction(2 * i + 1, 2 * m) for i in range(m)]
    ks = range(-m - 1, m + 2)
    half_m = Fraction(m, 2)
    B = [[_bspline_exact(m, y - k + half_m) for k in ks] for y in ys]
    A, b = [], []
    for r in range(m):
        for yi, y in enumerate(ys):
            row = []
            for q in range(K + 1):
                pair = (q,) if q == 0 else (q, -q)
                row.append(sum(B[yi][ki] * Fraction(j + k) ** r for j in pair for ki, k in enumerate(ks)))
            A.append(row)
            b.append(y ** r)
    half = _solve_exact(A, b)
    return half[:0:-1] + half


def _univariate_stencil(m: int) -> np.ndarray:
    """Coefficients c_{-K..K} of the symmetric univariate stencil, K = floor((m-1)/2)."""
    return np.array([float(c) for c in _stencil_cache(m)])


_STENCILS: dict = {}


def _stencil_cache(m: int) -> list:
    if m not in _STENCILS:
        _STENCILS[m] = _univariate_stencil_exact(m)
    return _STENCILS[m]


def lambda_star(m: int, d: int = 1) -> LambdaStencil:
    """Smallest symmetric stencil making Q_m reproduce coordinatewise degree <= m-1.

    The univariate stencil has 2K + 1 points, K = floor((m - 1) / 2), found by
    collocating the reproduction identities in exact rational arithmetic; the d-variate stencil is its
    tensor power. Orders above ``MAX_STENCIL_ORDER`` are refused.
    """
    m = _check_m(m)
    if d < 1:
        raise ValidationError("d must be >= 1", "d")
    if m > MAX_STENCIL_ORDER:
        raise ValidationError(f"m must be <= {MAX_STENCIL_ORDER}", "m")
    c = _univariate_stencil(m)
    K = (c.size - 1) // 2
    js = np.arange(-K, K + 1)
    offsets = np.array(list(itertools.product(js, repeat=d)), dtype=np.int64).reshape(-1, d)
    coeffs = np.array([np.prod(c[o + K]) for o in offsets])
    return LambdaStencil(m, d, offsets, coeffs)


def quasi_interpolate(f, m: int, h: float, y, d: int | None = None) -> np.ndarray:
    """Q_{m,h}(f)(y) from exact samples of the callable ``f``.

    ``f`` maps an (n, d) array to n values. Every shift whose support
    contains a query point is used, so this is the ideal operator on R^d.
    """
    m = _check_m(m)
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if d is None:
        d = Y.shape[1]
    st = lambda_star(m, d)
    U = Y / h + m / 2
    lo = np.floor(U).astype(np.int64) - m + 1
    kmin = lo.min(axis=0)
    kmax = np.floor(U).max(axis=0).astype(np.int64)
    shape = tuple(int(v) for v in kmax - kmin + 1)
    ks = np.stack(np.meshgrid(*[np.arange(kmin[i], kmax[i] + 1) for i in range(d)], indexing="ij"),
                  axis=-1).reshape(-1, d)
    gamma = np.zeros(ks.shape[0])
    for off, c in zip(st.offsets, st.coeffs):
        gamma += c * np.asarray(f(h * (ks + off)), dtype=float)
    return _kernels.spline_eval(gamma.reshape(shape), kmin, m, h, Y)


# ---------------------------------------------------------------------------
# scattered fit
# ---------------------------------------------------------------------------

@dataclass
class SplineModel:
    """Scattered quasi-interpolant on [-1, 1]^d.

    ``grid[k - kmin]`` holds gamma_k; ``shift_weights`` maps each shift (tuple)
    to its local quadrature functional, indexed into the fitting samples.
    """

    m: int
    h: float
    d: int
    kmin: np.ndarray
    grid: np.ndarray
    shift_weights: dict = field(default_factory=dict, repr=False)

    @property
    def max_residual(self) -> float:
        return max((w.residual for w in self.shift_weights.values()), default=0.0)

    @property
    def shifts(self) -> list:
        return sorted(self.shift_weights)

    def __call__(self, y) -> np.ndarray:
        return eval_spline(self, y)

    def to_json(self) -> dict:
        return {
            "method": "spline",
            "m": self.m,
            "h": self.h,
            "d": self.d,
            "kmin": [int(v) for v in self.kmin],
            "shape": list(self.grid.shape),
            "coeffs": [float(v) for v in self.grid.ravel()],
            "shifts": [
                {"k": list(k), "indices": [int(i) for i in w.indices],
                 "weights": [float(v) for v in w.weights], "residual": float(w.residual)}
                for k, w in sorted(self.shift_weights.items())
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplineModel":
        try:
            shape = tuple(int(v) for v in obj["shape"])
            grid = np.asarray(obj["coeffs"], dtype=float).reshape(shape)
            sw = {}
            m = int(obj["m"])
            for s in obj.get("shifts", []):
                sw[tuple(int(v) for v in s["k"])] = QuadratureWeights(
                    "monomial", m - 1, np.asarray(s["indices"], dtype=np.int64),
                    np.asarray(s["weights"], dtype=float), float(s["residual"]),
                    int(max(s["indices"], default=-1)) + 1)
            return cls(m, float(obj["h"]), int(obj["d"]), np.asarray(obj["kmin"], dtype=np.int64), grid, sw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad spline model JSON: {exc}", "model") from None


def shift_range(m: int, h: float, d: int):
    """Smallest/largest k whose support h*(k - m/2 + [0, m]) meets the open cube."""
    lo = math.floor(-1.0 / h - m / 2) + 1
    hi = math.ceil(1.0 / h + m / 2) - 1
    return np.full(d, lo, dtype=np.int64), np.full(d, hi, dtype=np.int64)


def fit_scattered(points, values, m: int, h: float, *, window: float | None = None,
                  tol: float = 1e-9) -> SplineModel:
    """Scattered quasi-interpolant Q~_{m,h} from samples on [-1, 1]^d.

    For every shift k whose support meets the cube, the samples with
    ``|y/h - k|_inf <= window`` (default ``m/2 + 1`` cells) carry a
    minimum-norm functional matching the stencil's moments of all monomials
    of coordinatewise degree <= m - 1, in local coordinates
    ``z = (y/h - k) / window``.

    Raises
    ------
    CoverageError
        Some shift has no local data or an infeasible moment system; the
        offending shifts are listed. A larger h usually helps.
    """
    m = _check_m(m)
    if not h > 0:
        raise ValidationError("h must be > 0", "h")
    Y = np.asarray(points, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    f = np.asarray(values, dtype=float).reshape(-1)
    if Y.shape[0] != f.shape[0]:
        raise ValidationError("points and values differ in length", "values")
    if Y.shape[0] == 0:
        raise ValidationError("no samples", "points")
    d = Y.shape[1]
    W = m / 2 + 1 if window is None else float(window)
    # per-axis stencil moments in local coordinates, combined as a tensor product
    c1 = _univariate_stencil(m)
    K = (c1.size - 1) // 2
    j = np.arange(-K, K + 1) / W
    mom1 = np.array([np.dot(c1, j ** r) for r in range(m)])
    idx = multi_indices(d, m - 1)
    spec = MomentSpec.monomial(d, m - 1, np.prod(mom1[idx], axis=1))

    kmin, kmax = shift_range(m, h, d)
    shape = tuple(int(v) for v in kmax - kmin + 1)
    grid = np.zeros(shape)
    U = Y / h
    tree = cKDTree(U)
    weights: dict = {}
    bad: list = []
    for k in itertools.product(*[range(int(kmin[i]), int(kmax[i]) + 1) for i in range(d)]):
        kk = np.asarray(k, dtype=float)
        local = np.asarray(tree.query_ball_point(kk, W * (1 + 1e-12), p=np.inf), dtype=np.int64)
        if local.size == 0:
            bad.append(k)
            continue
        local.sort()
        Z = (U[local] - kk) / W
        try:
            w = solve_moments(Z, spec, indices=local, n_points=Y.shape[0], tol=tol)
        except InfeasibleMomentsError:
            bad.append(k)
            continue
        if not w.exact:
            bad.append(k)
            continue
        weights[k] = w
        grid[tuple(np.asarray(k) - kmin)] = w.weights @ f[local]
    if bad:
        raise CoverageError(f"{len(bad)} spline shifts lack usable local data: {bad[:10]}"
                            + (" ..." if len(bad) > 10 else ""), bad)
    return SplineModel(m, float(h), d, kmin, grid, weights)


def eval_spline(model: SplineModel, y) -> np.ndarray:
    """sum_k gamma_k N_m(y/h - k + m/2) at the points ``y`` (shape (n, d))."""
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None] if model.d == 1 else Y[None, :]
    if Y.shape[1] != model.d:
        raise ValidationError(f"expected points of dimension {model.d}", "y")
    return _kernels.spline_eval(model.grid, model.kmin, model.m, model.h, Y)
