"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``MANIFOLD_ATLAS_BACKEND``
(``numba`` or ``numpy``). ``numba`` is the default when it imports; both
implementations stay reachable as ``numba_impl`` / ``numpy_impl`` so tests and
the benchmark can compare them.

Kernels
-------
bspline_local(m, x)
    Values N_m(x + j), j = 0..m-1, of the cardinal B-spline of order m for a
    local offset x in [0, 1).
bspline_values(m, t)
    N_m(t) for an array of t (support [0, m]).
spline_eval(grid, kmin, m, h, Y)
    sum_k grid[k - kmin] * prod_i N_m(Y_i / h - k_i + m/2), the centred
    tensor-product spline expansion.
clenshaw_eval(coeffs, Y)
    Tensor Chebyshev series evaluated by nested Clenshaw recurrences, last axis
    reduced first.
secant_extremes(P, X)
    min / max over pairs of ||P_i - P_j|| / ||X_i - X_j|| (zero chords skipped).
"""

from __future__ import annotations

import itertools
import os
import types

import numpy as np

_requested = os.environ.get("MANIFOLD_ATLAS_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"MANIFOLD_ATLAS_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# loop kernels (compiled by numba when available)
# ---------------------------------------------------------------------------

def _bspline_local_loop(m, x, out):
    out[0] = 1.0
    for j in range(1, m):
        out[j] = 0.0
    for k in range(2, m + 1):
        # order k values from order k-1, downward so out[j-1] is still old
        for j in range(k - 1, -1, -1):
            left = (x + j) * out[j] if j <= k - 2 else 0.0
            right = (k - x - j) * out[j - 1] if j >= 1 else 0.0
            out[j] = (left + right) / (k - 1)


def _bspline_values_loop(m, t):
    res = np.zeros(t.shape[0])
    buf = np.empty(m)
    for p in range(t.shape[0]):
        tp = t[p]
        if tp < 0.0 or tp >= m:
            continue
        i = int(np.floor(tp))
        _bspline_local(m, tp - i, buf)
        res[p] = buf[i]
    return res


def _spline_eval_loop(grid_flat, gshape, kmin, m, h, Y):
    npts, d = Y.shape
    res = np.zeros(npts)
    vals = np.empty((d, m))
    base = np.empty(d, dtype=np.int64)
    buf = np.empty(m)
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for i in range(d - 1, -1, -1):
        strides[i] = s
        s *= gshape[i]
    combo = np.zeros(d, dtype=np.int64)
    ncombo = m ** d
    for p in range(npts):
        for i in range(d):
            u = Y[p, i] / h + 0.5 * m
            fi = np.floor(u)
            _bspline_local(m, u - fi, buf)
            base[i] = int(fi)
            for j in range(m):
                vals[i, j] = buf[j]
        acc = 0.0
        for i in range(d):
            combo[i] = 0
        for _ in range(ncombo):
            w = 1.0
            flat = 0
            ok = True
            for i in range(d):
                idx = base[i] - combo[i] - kmin[i]
                if idx < 0 or idx >= gshape[i]:
                    ok = False
                    break
                w *= vals[i, combo[i]]
                flat += idx * strides[i]
            if ok:
                acc += w * grid_flat[flat]
            # odometer increment
            for i in range(d - 1, -1, -1):
                combo[i] += 1
                if combo[i] < m:
                    break
                combo[i] = 0
        res[p] = acc
    return res


def _clenshaw_loop(coeff_flat, cshape, Y):
    npts, d = Y.shape
    total = coeff_flat.shape[0]
    res = np.empty(npts)
    work = np.empty(total)
    for p in range(npts):
        for q in range(total):
            work[q] = coeff_flat[q]
        outer = total
        for axis in range(d - 1, -1, -1):
            L = cshape[axis]
            outer = outer // L
            y = Y[p, axis]
            for o in range(outer):
                off = o * L
                b1 = 0.0
                b2 = 0.0
                for k in range(L - 1, 0, -1):
                    b0 = work[off + k] + 2.0 * y * b1 - b2
                    b2 = b1
                    b1 = b0
                work[o] = work[off] + y * b1 - b2
        res[p] = work[0]
    return res


def _secant_extremes_loop(P, X):
    n = P.shape[0]
    lo = np.inf
    hi = 0.0
    count = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = 0.0
            for c in range(X.shape[1]):
                t = X[i, c] - X[j, c]
                dx += t * t
            if dx == 0.0:
                continue
            dp = 0.0
            for c in range(P.shape[1]):
                t = P[i, c] - P[j, c]
                dp += t * t
            r = np.sqrt(dp / dx)
            if r < lo:
                lo = r
            if r > hi:
                hi = r
            count += 1
    return lo, hi, count


if HAS_NUMBA and _requested == "numba":
    _jit = numba.njit(cache=True, nogil=True)
    _bspline_local = _jit(_bspline_local_loop)
    _nb_bspline_values = _jit(_bspline_values_loop)
    _nb_spline_eval = _jit(_spline_eval_loop)
    _nb_clenshaw = _jit(_clenshaw_loop)
    _nb_secant = _jit(_secant_extremes_loop)
    BACKEND = "numba"
else:
    _bspline_local = _bspline_local_loop
    _nb_bspline_values = _nb_spline_eval = _nb_clenshaw = _nb_secant = None
    BACKEND = "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_bspline_local(m: int, x: np.ndarray) -> np.ndarray:
    """Vectorised local values: returns shape (len(x), m)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.shape[0], m))
    out[:, 0] = 1.0
    for k in range(2, m + 1):
        new = np.zeros_like(out)
        for j in range(k):
            if j <= k - 2:
                new[:, j] += (x + j) * out[:, j]
            if j >= 1:
                new[:, j] += (k - x - j) * out[:, j - 1]
        out = new / (k - 1)
    return out


def _np_bspline_values(m: int, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    res = np.zeros(t.shape[0])
    inside = (t >= 0.0) & (t < m)
    ti = t[inside]
    i = np.floor(ti)
    local = _np_bspline_local(m, ti - i)
    res[inside] = local[np.arange(ti.shape[0]), i.astype(np.int64)]
    return res


def _np_spline_eval(grid: np.ndarray, kmin: np.ndarray, m: int, h: float, Y: np.ndarray) -> np.ndarray:
    npts, d = Y.shape
    U = Y / h + 0.5 * m
    base = np.floor(U).astype(np.int64)
    vals = [_np_bspline_local(m, U[:, i] - base[:, i]) for i in range(d)]
    res = np.zeros(npts)
    for combo in itertools.product(range(m), repeat=d):
        w = np.ones(npts)
        ok = np.ones(npts, dtype=bool)
        idx = []
        for i, j in enumerate(combo):
            ii = base[:, i] - j - kmin[i]
            ok &= (ii >= 0) & (ii < grid.shape[i])
            idx.append(np.clip(ii, 0, grid.shape[i] - 1))
            w = w * vals[i][:, j]
        res += np.where(ok, w * grid[tuple(idx)], 0.0)
    return res


def _np_clenshaw(coeffs: np.ndarray, Y: np.ndarray, chunk: int = 2048) -> np.ndarray:
    npts, d = Y.shape
    res = np.empty(npts)
    for start in range(0, npts, chunk):
        Yc = Y[start:start + chunk]
        work = np.broadcast_to(coeffs, (Yc.shape[0],) + coeffs.shape)
        for axis in range(d - 1, -1, -1):
            y = Yc[:, axis].reshape((-1,) + (1,) * axis)
            L = work.shape[-1]
            b1 = np.zeros(work.shape[:-1])
            b2 = np.zeros(work.shape[:-1])
            for k in range(L - 1, 0, -1):
                b1, b2 = work[..., k] + 2.0 * y * b1 - b2, b1
            work = work[..., 0] + y * b1 - b2
        res[start:start + chunk] = work
    return res


def _np_secant_extremes(P: np.ndarray, X: np.ndarray):
    from scipy.spatial.distance import pdist

    if P.shape[0] < 2:
        return np.inf, 0.0, 0
    dx = pdist(X)
    dp = pdist(P)
    keep = dx > 0
    if not keep.any():
        return np.inf, 0.0, 0
    r = dp[keep] / dx[keep]
    return float(r.min()), float(r.max()), int(keep.sum())


numpy_impl = types.SimpleNamespace(
    bspline_values=_np_bspline_values,
    spline_eval=_np_spline_eval,
    clenshaw_eval=_np_clenshaw,
    secant_extremes=_np_secant_extremes,
)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


if BACKEND == "numba":

    def _nb_spline_eval_wrap(grid, kmin, m, h, Y):
        grid = _f64(grid)
        return _nb_spline_eval(grid.ravel(), np.asarray(grid.shape, dtype=np.int64),
                               np.asarray(kmin, dtype=np.int64), int(m), float(h), _f64(Y))

    def _nb_clenshaw_wrap(coeffs, Y):
        coeffs = _f64(coeffs)
        return _nb_clenshaw(coeffs.ravel(), np.asarray(coeffs.shape, dtype=np.int64), _f64(Y))

    def _nb_secant_wrap(P, X):
        lo, hi, count = _nb_secant(_f64(P), _f64(X))
        return float(lo), float(hi), int(count)

    numba_impl = types.SimpleNamespace(
        bspline_values=lambda m, t: _nb_bspline_values(int(m), _f64(t)),
        spline_eval=_nb_spline_eval_wrap,
        clenshaw_eval=_nb_clenshaw_wrap,
        secant_extremes=_nb_secant_wrap,
    )
    _active = numba_impl
else:
    numba_impl = None
    _active = numpy_impl


def bspline_values(m: int, t) -> np.ndarray:
    return _active.bspline_values(m, np.atleast_1d(np.asarray(t, dtype=float)))


def spline_eval(grid, kmin, m: int, h: float, Y) -> np.ndarray:
    return _active.spline_eval(np.asarray(grid, dtype=float), np.asarray(kmin), m, h,
                               np.atleast_2d(np.asarray(Y, dtype=float)))


def clenshaw_eval(coeffs, Y) -> np.ndarray:
    return _active.clenshaw_eval(np.asarray(coeffs, dtype=float), np.atleast_2d(np.asarray(Y, dtype=float)))


def secant_extremes(P, X):
    return _active.secant_extremes(np.asarray(P, dtype=float), np.asarray(X, dtype=float))
