"""Filtered Chebyshev projection from scattered data.

The model is

    V_{n,C}(f)(y) = sum_{|k|_inf <= n-1} h(k/n) f_hat(k) T_k(y),
    f_hat(k) = prod_j (2 if k_j >= 1 else 1) * sum_xi w_xi f(xi) T_k(xi),

with w the Chebyshev quadrature weights of :mod:`quadrature` (probability
measure, so the orthonormality factor is 1 for k_j = 0 and 2 otherwise) and
h(u) = prod_j h(u_j) a low-pass filter equal to 1 on [0, 1/2] and 0 beyond 1.
Evaluation uses nested Clenshaw recurrences, last axis first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import ValidationError
from .quadrature import (DEFAULT_COND_CAP, DEFAULT_TOL, MomentSpec, QuadratureWeights,
                         exactness_degree_search, multi_indices, select_representatives,
                         solve_moments, vandermonde)

FILTERS = ("smooth-exp", "cosine")
DEFAULT_L1_CAP = 20.0


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

def cheb_eval(m: int, t) -> np.ndarray:
    """T_m(t) by the three-term recurrence (no clamping)."""
    if m < 0:
        raise ValidationError("Chebyshev degree must be >= 0", "m")
    t = np.asarray(t, dtype=float)
    if m == 0:
        return np.ones_like(t)
    prev, cur = np.ones_like(t), t.copy()
    for _ in range(m - 1):
        prev, cur = cur, 2.0 * t * cur - prev
    return cur


def cheb_eval_tensor(k, y) -> np.ndarray:
    """T_k(y) = prod_j T_{k_j}(y_j) for y of shape (n, d) or (d,)."""
    k = np.atleast_1d(np.asarray(k, dtype=int))
    Y = np.asarray(y, dtype=float)
    scalar = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != k.size:
        raise ValidationError("multi-index and point dimension differ", "k")
    out = np.ones(Y.shape[0])
    for j, kj in enumerate(k):
        out *= cheb_eval(int(kj), Y[:, j])
    return out[0] if scalar else out


def cheb_monomial_coeffs(m: int) -> list:
    """Exact monomial coefficients of T_m, lowest power first.

    Closed form for T_{2n} and T_{2n+1} as products over the root offsets,
    evaluated in rationals.
    """
    if m < 0:
        raise ValidationError("Chebyshev degree must be >= 0", "m")
    coeffs = [Fraction(0)] * (m + 1)
    n = m // 2
    if m % 2 == 0:
        for j in range(n + 1):
            p = 1
            for ell in range(1, j + 1):
                p *= n * n - (j - ell) ** 2
            coeffs[2 * j] = (-1) ** n * Fraction((-4) ** j * p, math.factorial(2 * j))
    else:
        q = 2 * n + 1
        for j in range(n + 1):
            p = 1
            for ell in range(1, j + 1):
                p *= q * q - (2 * j - 2 * ell + 1) ** 2
            coeffs[2 * j + 1] = (-1) ** n * Fraction((-1) ** j * q * p, math.factorial(2 * j + 1))
    return coeffs


def cheb_eval_monomial(m: int, t) -> np.ndarray:
    """T_m(t) from :func:`cheb_monomial_coeffs` by Horner's rule."""
    c = [float(v) for v in cheb_monomial_coeffs(m)]
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for a in reversed(c):
        out = out * t + a
    return out


# ---------------------------------------------------------------------------
# filter
# ---------------------------------------------------------------------------

def _g(t):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def filter_eval(u, kind: str = "smooth-exp") -> np.ndarray:
    """Even low-pass filter: 1 for |u| <= 1/2, 0 for |u| >= 1.

    ``smooth-exp`` bridges with g(1-s) / (g(1-s) + g(s)), g(t) = exp(-1/t),
    s = 2|u| - 1, which is C-infinity; ``cosine`` uses (1 + cos(pi s)) / 2.
    """
    a = np.abs(np.asarray(u, dtype=float))
    s = np.clip(2.0 * a - 1.0, 0.0, 1.0)
    if kind == "smooth-exp":
        num = _g(1.0 - s)
        mid = num / (num + _g(s))
    elif kind == "cosine":
        mid = 0.5 * (1.0 + np.cos(np.pi * s))
    else:
        raise ValidationError(f"filter must be one of {FILTERS}", "filter")
    return np.where(a <= 0.5, 1.0, np.where(a >= 1.0, 0.0, mid))


def filter_tensor(n: int, d: int, kind: str = "smooth-exp") -> np.ndarray:
    """h(k/n) on the grid {0..n-1}^d as a tensor of shape (n,)*d."""
    h1 = filter_eval(np.arange(n) / n, kind)
    out = np.ones((n,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = n
        out = out * h1.reshape(shape)
    return out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class ChebModel:
    n: int
    d: int
    coeffs: np.ndarray
    filter: str = "smooth-exp"
    weights: QuadratureWeights | None = None

    def __call__(self, y) -> np.ndarray:
        return eval_clenshaw(self, y)

    def to_json(self) -> dict:
        return {
            "method": "cheb",
            "n": self.n,
            "d": self.d,
            "coeffs": [float(v) for v in self.coeffs.ravel()],
            "filter": self.filter,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChebModel":
        try:
            n, d = int(obj["n"]), int(obj["d"])
            c = np.asarray(obj["coeffs"], dtype=float).reshape((n,) * d)
            return cls(n, d, c, str(obj.get("filter", "smooth-exp")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad Chebyshev model JSON: {exc}", "model") from None


def _orthonormal_factors(n: int, d: int) -> np.ndarray:
    f1 = np.where(np.arange(n) >= 1, 2.0, 1.0)
    idx = multi_indices(d, n - 1)
    return np.prod(f1[idx], axis=1).reshape((n,) * d)


def compute_coeffs(points, values, n: int, weights: QuadratureWeights | None,
                   filter: str = "smooth-exp") -> ChebModel:
    """Filtered coefficients h(k/n) f_hat(k) for |k|_inf <= n - 1.

    ``weights`` must be Chebyshev weights of exactness degree >= n - 1 on
    ``points`` (indexed as in :class:`QuadratureWeights`).
    """
    if weights is None:
        raise ValidationError("no quadrature weights; run exactness_degree_search and solve_moments first",
                              "weights")
    if weights.basis != "chebyshev":
        raise ValidationError("coefficients need Chebyshev-basis weights", "weights")
    if n < 1:
        raise ValidationError("n must be >= 1", "n")
    if weights.degree < n - 1:
        raise ValidationError(f"weights are exact to degree {weights.degree} < n - 1 = {n - 1}", "weights")
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    f = np.asarray(values, dtype=float).reshape(-1)
    if f.shape[0] != P.shape[0]:
        raise ValidationError("points and values differ in length", "values")
    d = P.shape[1]
    sel = weights.indices
    V = vandermonde(P[sel], "chebyshev", n - 1)
    raw = (V @ (weights.weights * f[sel])).reshape((n,) * d)
    filt = filter_tensor(n, d, filter)
    coeffs = np.where(filt == 0.0, 0.0, filt * _orthonormal_factors(n, d) * raw)
    return ChebModel(n, d, coeffs, filter, weights)


def eval_clenshaw(model: ChebModel, y) -> np.ndarray:
    """Evaluate the model at y (shape (m, d)) by nested Clenshaw recurrences."""
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None] if model.d == 1 else Y[None, :]
    if Y.shape[1] != model.d:
        raise ValidationError(f"expected points of dimension {model.d}", "y")
    return _kernels.clenshaw_eval(model.coeffs, Y)


def eval_direct(model: ChebModel, y) -> np.ndarray:
    """Direct tensor summation; reference for :func:`eval_clenshaw`."""
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    V = vandermonde(Y, "chebyshev", model.n - 1)
    return model.coeffs.ravel() @ V


def kernel_phi(n: int, y, t, filter: str = "smooth-exp") -> np.ndarray:
    """Normalised kernel Phi_n(y, t) = sum_k h(k/n) c_k T_k(y) T_k(t), pairwise over rows."""
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    Tt = np.atleast_2d(np.asarray(t, dtype=float))
    d = Y.shape[1]
    lam = (filter_tensor(n, d, filter) * _orthonormal_factors(n, d)).ravel()
    Vy = vandermonde(Y, "chebyshev", n - 1)
    Vt = vandermonde(Tt, "chebyshev", n - 1)
    return Vy.T @ (lam[:, None] * Vt)


def fit_auto(points, values, start_n: int = 16, *, filter: str = "smooth-exp",
             side: float | None = None, tol: float = DEFAULT_TOL,
             cond_cap: float = DEFAULT_COND_CAP, l1_cap: float | None = DEFAULT_L1_CAP) -> ChebModel:
    """Choose n from the data and fit.

    The largest exactness degree E <= 2*start_n - 1 with a well conditioned
    Chebyshev moment system is found; n = max(1, min(start_n, (E + 1) // 2))
    so the weights, solved at degree min(E, 2n - 1), are exact for the
    products P * T_k appearing when V_{n,C} reproduces low-degree P.

    The operator's sup-norm grows with sum |w|, so exact but wildly
    oscillating weights amplify everything the data does not share with a
    low-degree polynomial. With ``l1_cap`` set, n is lowered until
    sum |w| <= l1_cap (n = 1 is always accepted).
    ``side`` optionally thins the data to one point per subcube first.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValidationError("no samples", "points")
    if start_n < 1:
        raise ValidationError("start_n must be >= 1", "n")
    sel = select_representatives(P, side)
    E = exactness_degree_search(P[sel], "chebyshev", 2 * start_n - 1, tol=tol, cond_cap=cond_cap)
    n = max(1, min(start_n, (E + 1) // 2))
    while True:
        deg = min(E, 2 * n - 1)
        w = solve_moments(P[sel], MomentSpec.chebyshev(P.shape[1], deg), indices=sel,
                          n_points=P.shape[0], tol=tol)
        if l1_cap is None or n == 1 or np.abs(w.weights).sum() <= l1_cap:
            break
        n -= 1
    return compute_coeffs(P, values, n, w, filter)


def fit_fixed(points, values, n: int, *, degree: int | None = None, filter: str = "smooth-exp",
              side: float | None = None, tol: float = DEFAULT_TOL) -> ChebModel:
    """Fit with a given n; weights exact to ``degree`` (default 2n - 1)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    deg = 2 * n - 1 if degree is None else degree
    sel = select_representatives(P, side)
    w = solve_moments(P[sel], MomentSpec.chebyshev(P.shape[1], deg), indices=sel,
                      n_points=P.shape[0], tol=tol)
    return compute_coeffs(P, values, n, w, filter)
