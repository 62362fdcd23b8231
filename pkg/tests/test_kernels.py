import os
import subprocess
import sys

import numpy as np
import pytest

from manifold_atlas import _kernels

needs_numba = pytest.mark.skipif(_kernels.numba_impl is None, reason="numba backend not active")


def _cases(rng):
    return {
        "bspline": [(m, rng.uniform(-1, m + 1, 500)) for m in (2, 3, 4, 6)],
        "spline": [(rng.standard_normal((12,)), np.array([-5]), 4, 0.25, rng.uniform(-1, 1, (300, 1))),
                   (rng.standard_normal((7, 9)), np.array([-3, -4]), 3, 0.5, rng.uniform(-1, 1, (300, 2)))],
        "clenshaw": [(rng.standard_normal(9), rng.uniform(-1, 1, (200, 1))),
                     (rng.standard_normal((6, 6)), rng.uniform(-1, 1, (200, 2))),
                     (rng.standard_normal((4, 5, 3)), rng.uniform(-1, 1, (50, 3)))],
    }


@needs_numba
def test_backends_agree(rng):
    nb, npy = _kernels.numba_impl, _kernels.numpy_impl
    c = _cases(rng)
    for m, t in c["bspline"]:
        assert np.allclose(nb.bspline_values(m, t), npy.bspline_values(m, t), atol=1e-14)
    for args in c["spline"]:
        assert np.allclose(nb.spline_eval(*args), npy.spline_eval(*args), atol=1e-12)
    for coeffs, Y in c["clenshaw"]:
        assert np.allclose(nb.clenshaw_eval(coeffs, Y), npy.clenshaw_eval(coeffs, Y), atol=1e-12)
    P, X = rng.standard_normal((80, 1)), rng.standard_normal((80, 3))
    lo_a, hi_a, n_a = nb.secant_extremes(P, X)
    lo_b, hi_b, n_b = npy.secant_extremes(P, X)
    assert n_a == n_b == 80 * 79 // 2
    assert lo_a == pytest.approx(lo_b, rel=1e-12) and hi_a == pytest.approx(hi_b, rel=1e-12)


def test_numpy_clenshaw_matches_numpy_polynomial(rng):
    c = rng.standard_normal((5, 4))
    Y = rng.uniform(-1, 1, (30, 2))
    ref = np.polynomial.chebyshev.chebval2d(Y[:, 0], Y[:, 1], c)
    assert np.allclose(_kernels.numpy_impl.clenshaw_eval(c, Y), ref, atol=1e-12)


def test_secant_skips_zero_chords():
    X = np.array([[0.0], [0.0], [1.0]])
    P = np.array([[0.0], [5.0], [2.0]])
    lo, hi, count = _kernels.numpy_impl.secant_extremes(P, X)
    assert count == 2 and lo == 2.0 and hi == 3.0


def _run(backend, code):
    env = dict(os.environ, MANIFOLD_ATLAS_BACKEND=backend)
    return subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)


def test_numpy_backend_selected_by_environment():
    proc = _run("numpy", "from manifold_atlas import _kernels as k; import numpy as np;"
                         "from manifold_atlas.bspline import bspline_1d;"
                         "print(k.BACKEND, k.numba_impl is None, bspline_1d(4, np.array([2.0]))[0])")
    assert proc.returncode == 0, proc.stderr
    backend, missing, value = proc.stdout.split()
    assert backend == "numpy" and missing == "True" and float(value) == pytest.approx(2 / 3)


def test_invalid_backend_fails_at_import():
    proc = _run("fortran", "import manifold_atlas")
    assert proc.returncode != 0 and "MANIFOLD_ATLAS_BACKEND" in proc.stderr
