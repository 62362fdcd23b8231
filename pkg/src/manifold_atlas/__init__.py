"""Local coordinate charts and function approximation on sampled manifolds.

Modules
-------
manifold_gen
    Synthetic clouds (helix, circle, sphere, torus), test fields and CSV I/O.
chart
    Squared-distance charts, calibration and atlases.
quadrature
    Moment-matching quadrature weights on scattered points.
bspline
    Cardinal B-splines and the scattered quasi-interpolant.
chebyshev
    Filtered Chebyshev projection from scattered data.
ridge
    Exact ReQU networks for polynomials, B-splines and charts.
extension
    Pre-images and minimal-Sobolev-norm extension off the manifold.
pipeline
    End-to-end fitting, prediction and convergence tables.
"""

from .bspline import SplineModel, eval_bspline, fit_scattered, lambda_star, quasi_interpolate
from .chart import Atlas, ChartMap, StarPolicy, build_atlas, in_chart, make_chart, phi, select_star
from .chebyshev import ChebModel, cheb_eval, compute_coeffs, eval_clenshaw, filter_eval, fit_auto, fit_fixed
from .errors import (AtlasError, CoverageError, DegenerateStarError, InfeasibleConstraintsError,
                     InfeasibleMomentsError, InsufficientDataError, NumericalError, OutOfCoverageError,
                     OutOfTubeError, ParseError, SchemaError, UnsupportedOperationError, ValidationError)
from .extension import (MSNProblem, build_tubular, extend_evaluate, fit_extension, fit_preimage, msn_fit,
                        preimage)
from .manifold_gen import ManifoldSpec, PointCloud, load_csv, sample_field, sample_manifold, save_csv
from .pipeline import PipelineConfig, fit_pipeline, predict, run_convergence
from .quadrature import MomentSpec, QuadratureWeights, exactness_degree_search, solve_moments
from .ridge import compile_bspline, compile_chart, compile_poly, compile_power, eval_network

__version__ = "0.1.0"

__all__ = [
    "Atlas", "AtlasError", "ChartMap", "ChebModel", "CoverageError", "DegenerateStarError",
    "InfeasibleConstraintsError", "InfeasibleMomentsError", "InsufficientDataError", "MSNProblem",
    "ManifoldSpec", "MomentSpec", "NumericalError", "OutOfCoverageError", "OutOfTubeError", "ParseError",
    "PipelineConfig", "PointCloud", "QuadratureWeights", "SchemaError", "SplineModel", "StarPolicy",
    "UnsupportedOperationError", "ValidationError", "build_atlas", "build_tubular", "cheb_eval",
    "compile_bspline", "compile_chart", "compile_poly", "compile_power", "compute_coeffs", "eval_bspline",
    "eval_clenshaw", "eval_network", "exactness_degree_search", "extend_evaluate", "filter_eval",
    "fit_auto", "fit_extension", "fit_fixed", "fit_pipeline", "fit_preimage", "fit_scattered", "in_chart",
    "lambda_star", "load_csv", "make_chart", "msn_fit", "phi", "predict", "preimage", "quasi_interpolate",
    "run_convergence", "sample_field", "sample_manifold", "save_csv", "select_star", "solve_moments",
]
