"""Command line interface: ``atlas <verb> ...``.

Exit codes: 0 on success, 2 for invalid input (bad flags, files or values),
3 for numerical failures (coverage, degenerate charts, infeasible systems).

Every verb accepts ``--config FILE``, a text file of ``key = value`` lines
(``#`` starts a comment). Keys are flag names with dashes or underscores;
config values override flags given on the command line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bspline import SplineModel, fit_scattered
from .chart import Atlas, build_atlas
from .chebyshev import ChebModel, fit_auto, fit_fixed
from .errors import AtlasError, NumericalError, SchemaError, ValidationError
from .extension import OPERATORS, build_tubular, fit_extension
from .extension import fit_preimage
from .manifold_gen import (KINDS, ManifoldSpec, load_csv, read_table, sample_field,
                           sample_manifold, save_csv)
from .pipeline import (PipelineConfig, PipelineResult, convergence_csv, fit_pipeline, predict,
                       run_convergence)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _n_value(text: str):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"{path}:{lineno}: expected key=value", "config")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(args, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    for key, raw in read_config(args.config).items():
        action = actions.get(key)
        if action is None:
            raise ValidationError(f"unknown config key {key!r}", key)
        if isinstance(action, argparse._StoreTrueAction):
            value = _bool(raw)
        else:
            conv = action.type or str
            try:
                value = conv(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ValidationError(f"config key {key!r}: {exc}", key) from None
        if action.choices is not None and value not in action.choices:
            raise ValidationError(f"config key {key!r} must be one of {list(action.choices)}", key)
        setattr(args, key, value)


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})", "json") from None


def _write_columns(path, header: list[str], columns: list) -> None:
    rows = [",".join(header)]
    n = len(columns[0]) if columns else 0
    for i in range(n):
        rows.append(",".join(c[i] if isinstance(c[i], str) else repr(float(c[i])) for c in columns))
    _write_text(path, "\n".join(rows) + "\n")


def _coord_columns(header: list[str], prefix: str, path) -> list[int]:
    cols = [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
    if not cols or [header[i] for i in cols] != [f"{prefix}{j + 1}" for j in range(len(cols))]:
        raise SchemaError(f"{path}: expected columns {prefix}1..{prefix}k, got {header}")
    return cols


def _policy_kwargs(args) -> dict:
    return {k: getattr(args, k) for k in ("k_neighbors", "c1", "c2", "gamma_min",
                                          "coverage_fraction", "spread_bound")}


def _load_model(obj: dict):
    method = obj.get("method")
    if method == "spline":
        return SplineModel.from_json(obj)
    if method == "cheb":
        return ChebModel.from_json(obj)
    raise SchemaError(f"model JSON has unknown method {method!r}")


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    param_range = tuple(args.param_range) if args.param_range else None
    if param_range is not None and len(param_range) != 2:
        raise ValidationError("--param-range takes two numbers lo,hi", "param_range")
    spec = ManifoldSpec(args.manifold, n=args.n, seed=args.seed, noise=args.noise, a=args.a,
                        radius=args.radius, D=args.D, r=args.r, R=args.R, param_range=param_range)
    cloud = sample_manifold(spec)
    if args.field:
        cloud = sample_field(cloud, args.field)
    save_csv(cloud, args.out)
    return EXIT_OK


def cmd_chart_build(args) -> int:
    cloud = load_csv(args.input)
    cfg = PipelineConfig(dim=args.dim, **_policy_kwargs(args))
    atlas = build_atlas(cloud, cfg.dim, cfg.policy())
    _write_json(args.out, atlas.to_json())
    return EXIT_OK


def cmd_chart_report(args) -> int:
    atlas = Atlas.from_json(_read_json(args.atlas))
    rows = []
    X = load_csv(args.input).points if args.input else None
    for ci, chart in enumerate(atlas.charts):
        row = {"chart": ci, "d": chart.d, "beta": chart.star.beta_star, "gamma": chart.star.gamma_proxy,
               "radius": chart.radius if math.isfinite(chart.radius) else None}
        if X is not None:
            row["n_points"] = int(np.sum(chart.in_chart(X)))
        rows.append(row)
    report = {"n_charts": len(atlas.charts), "d": atlas.d, "charts": rows}
    if X is not None:
        idx, fallback = atlas.locate(X)
        report["uncovered"] = int(np.sum(idx < 0))
        report["fallback"] = int(np.sum(fallback))
    _write_json(args.out, report)
    return EXIT_OK


def cmd_chart_map(args) -> int:
    atlas = Atlas.from_json(_read_json(args.atlas))
    cloud = load_csv(args.input)
    if args.chart is None:
        idx, _ = atlas.locate(cloud.points)
        keep = np.flatnonzero(idx >= 0)
    else:
        if not 0 <= args.chart < len(atlas.charts):
            raise ValidationError(f"chart index {args.chart} out of range", "chart")
        keep = np.flatnonzero(atlas.charts[args.chart].in_chart(cloud.points))
        idx = np.full(len(cloud), args.chart)
    Y = np.empty((keep.size, atlas.d))
    for ci in np.unique(idx[keep]):
        sel = keep[idx[keep] == ci]
        Y[np.searchsorted(keep, sel)] = atlas.charts[ci].phi(cloud.points[sel])
    header = [f"y{j + 1}" for j in range(atlas.d)]
    cols = [Y[:, j] for j in range(atlas.d)]
    if cloud.values is not None:
        header.append("f")
        cols.append(cloud.values[keep])
    header.append("chart")
    cols.append([str(int(c)) for c in idx[keep]])
    _write_columns(args.out, header, cols)
    return EXIT_OK


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig(dim=args.dim, method=args.method, n=args.n, start_n=args.start_n, m=args.m,
                          h=args.h, seed=args.seed, **_policy_kwargs(args))


def cmd_fit(args) -> int:
    header, data = read_table(args.input)
    if "x1" in header:
        # ambient samples: full pipeline (atlas plus one model per chart)
        cloud = load_csv(args.input)
        result = fit_pipeline(cloud, _config_from_args(args))
        _write_json(args.out, result.to_json())
        if args.report:
            # timing is left out so that reports are byte-reproducible
            _write_json(args.report, result.report.to_json(timing=False))
        return EXIT_OK
    ycols = _coord_columns(header, "y", args.input)
    if "f" not in header:
        raise SchemaError(f"{args.input}: no f column to fit")
    rows = np.arange(data.shape[0])
    if args.chart is not None:
        if "chart" not in header:
            raise SchemaError(f"{args.input}: --chart given but there is no chart column")
        rows = np.flatnonzero(data[:, header.index("chart")] == args.chart)
    Y, f = data[np.ix_(rows, ycols)], data[rows, header.index("f")]
    if Y.shape[0] == 0:
        raise ValidationError("no samples to fit", "in")
    if np.max(np.abs(Y)) > 1.0 + 1e-12:
        raise ValidationError("chart coordinates must lie in [-1, 1]", "in")
    if args.method == "spline":
        model = fit_scattered(Y, f, args.m, args.h)
    elif args.n == "auto":
        model = fit_auto(Y, f, args.start_n)
    else:
        model = fit_fixed(Y, f, args.n)
    _write_json(args.out, model.to_json())
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(_read_json(args.model))
    header, data = read_table(args.input)
    Y = data[:, _coord_columns(header, "y", args.input)]
    if Y.shape[1] != model.d:
        raise ValidationError(f"model expects {model.d} coordinates, file has {Y.shape[1]}", "in")
    _write_columns(args.out, ["f"], [model(Y)])
    return EXIT_OK


def cmd_predict(args) -> int:
    result = PipelineResult.from_json(_read_json(args.model))
    header, data = read_table(args.input)
    X = data[:, _coord_columns(header, "x", args.input)]
    values, idx, fallback = predict(result, X)
    _write_columns(args.out, ["f", "chart", "fallback"],
                   [values, [str(int(i)) for i in idx], [str(int(b)) for b in fallback]])
    return EXIT_OK


def cmd_preimage(args) -> int:
    atlas = Atlas.from_json(_read_json(args.atlas))
    cloud = load_csv(args.input)
    if not 0 <= args.chart < len(atlas.charts):
        raise ValidationError(f"chart index {args.chart} out of range", "chart")
    header, data = read_table(args.query)
    Y = data[:, _coord_columns(header, "y", args.query)]
    if Y.shape[1] != atlas.d:
        raise ValidationError(f"atlas has d={atlas.d}, query has {Y.shape[1]} coordinates", "query")
    model = fit_preimage(atlas, cloud, start_n=args.start_n)
    X = model(Y, args.chart)
    _write_columns(args.out, [f"x{i + 1}" for i in range(X.shape[1])], [X[:, i] for i in range(X.shape[1])])
    return EXIT_OK


def cmd_extend(args) -> int:
    atlas = Atlas.from_json(_read_json(args.atlas))
    cloud = load_csv(args.input)
    if cloud.values is None:
        raise ValidationError(f"{args.input}: no f column", "in")
    if not 0 <= args.chart < len(atlas.charts):
        raise ValidationError(f"chart index {args.chart} out of range", "chart")
    tub = build_tubular(atlas.charts[args.chart], args.s, cloud, args.tube_radius)
    msn = fit_extension(tub, cloud.points, cloud.values, N=args.N, operator=args.operator,
                        max_constraints=args.max_constraints)
    header, data = read_table(args.query)
    Xq = data[:, _coord_columns(header, "x", args.query)]
    Yq = tub.coords(Xq)
    ok = np.max(np.abs(Yq), axis=1) <= 1.0
    values = np.full(Xq.shape[0], math.nan)
    if ok.any():
        values[ok] = msn(Yq[ok])
    _write_columns(args.out, ["f", "status"], [values, ["ok" if o else "out-of-tube" for o in ok]])
    if args.report:
        _write_json(args.report, msn.to_json())
    return EXIT_OK


def cmd_converge(args) -> int:
    spec = ManifoldSpec(args.manifold, n=args.n, seed=args.seed, a=args.a, radius=args.radius)
    if args.method == "spline":
        grid = args.h_list or [0.125, 0.0625, 0.03125, 0.015625]
    else:
        grid = args.degrees or [4, 8, 16, 32]
    rows = run_convergence(spec, args.field, args.method, grid, m=args.m, n_eval=args.n_eval)
    _write_text(args.out, convergence_csv(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_policy(p) -> None:
    p.add_argument("--dim", type=int, default=1, help="intrinsic dimension d (default 1)")
    p.add_argument("--k-neighbors", type=int, default=32)
    p.add_argument("--c1", type=float, default=2.0, help="inner anchor annulus factor (default 2)")
    p.add_argument("--c2", type=float, default=4.0, help="outer anchor annulus factor (default 4)")
    p.add_argument("--gamma-min", type=float, default=0.1)
    p.add_argument("--coverage-fraction", type=float, default=0.8)
    p.add_argument("--spread-bound", type=float, default=10.0)


def _add_method(p) -> None:
    p.add_argument("--method", choices=("cheb", "spline"), default="cheb")
    p.add_argument("--n", type=_n_value, default="auto", help="Chebyshev n, integer or 'auto'")
    p.add_argument("--start-n", type=int, default=16, help="largest n tried by --n auto")
    p.add_argument("--m", type=int, default=4, help="spline order")
    p.add_argument("--h", type=float, default=0.0625, help="spline scale")


def _common(p) -> None:
    p.add_argument("--config", help="key=value file; its values override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="atlas", description="Local charts and approximation on point clouds.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("gen", help="sample a synthetic manifold")
    _common(p)
    p.add_argument("--manifold", choices=KINDS, default="helix")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--a", type=float, default=0.8, help="helix parameter, 0 < a < 1")
    p.add_argument("--radius", type=float, default=1.0, help="circle radius")
    p.add_argument("--D", type=int, default=None, help="ambient dimension")
    p.add_argument("--r", type=float, default=0.5, help="torus tube radius")
    p.add_argument("--R", type=float, default=1.0, help="torus centre radius")
    p.add_argument("--param-range", type=_float_list, default=None)
    p.add_argument("--field", default=None, help="e.g. trig:2, smooth:3, coordinate-sum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen, _parser=p)

    chart = sub.add_parser("chart", help="build, inspect or apply an atlas")
    csub = chart.add_subparsers(dest="action", required=True, parser_class=_ArgumentParser)
    p = csub.add_parser("build")
    _common(p)
    _add_policy(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_chart_build, _parser=p)
    p = csub.add_parser("report")
    _common(p)
    p.add_argument("--atlas", required=True)
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_chart_report, _parser=p)
    p = csub.add_parser("map")
    _common(p)
    p.add_argument("--atlas", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--chart", type=int, default=None, help="restrict to one chart's in-chart points")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_chart_map, _parser=p)

    p = sub.add_parser("fit", help="fit a chart model (y columns) or a full pipeline (x columns)")
    _common(p)
    _add_policy(p)
    _add_method(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chart", type=int, default=None)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="pipeline fit report JSON")
    p.set_defaults(func=cmd_fit, _parser=p)

    p = sub.add_parser("eval", help="evaluate a chart model at chart coordinates")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval, _parser=p)

    p = sub.add_parser("predict", help="evaluate a pipeline at ambient points")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict, _parser=p)

    p = sub.add_parser("preimage", help="ambient points for chart coordinates")
    _common(p)
    p.add_argument("--atlas", required=True)
    p.add_argument("--in", dest="input", required=True, help="training cloud CSV")
    p.add_argument("--query", required=True, help="CSV with y1..yd")
    p.add_argument("--chart", type=int, default=0)
    p.add_argument("--start-n", type=int, default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_preimage, _parser=p)

    p = sub.add_parser("extend", help="minimal-Sobolev-norm extension off the manifold")
    _common(p)
    p.add_argument("--atlas", required=True)
    p.add_argument("--in", dest="input", required=True, help="training cloud CSV with f")
    p.add_argument("--query", required=True, help="CSV with x1..xD")
    p.add_argument("--chart", type=int, default=0)
    p.add_argument("--s", type=int, default=2, help="tubular dimension")
    p.add_argument("--N", type=int, default=None, help="polynomial degree per axis")
    p.add_argument("--operator", choices=OPERATORS, default="laplacian")
    p.add_argument("--tube-radius", type=float, default=None)
    p.add_argument("--max-constraints", type=int, default=12, help="well-spread samples kept as constraints")
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_extend, _parser=p)

    p = sub.add_parser("converge", help="convergence table on a curve chart")
    _common(p)
    p.add_argument("--manifold", choices=("helix", "circle"), default="helix")
    p.add_argument("--n", type=int, default=4000, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a", type=float, default=0.8)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--field", default="trig:1")
    p.add_argument("--method", choices=("cheb", "spline"), default="spline")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--h-list", type=_float_list, default=None, help="spline scales, comma separated")
    p.add_argument("--degrees", type=_int_list, default=None, help="Chebyshev n values, comma separated")
    p.add_argument("--n-eval", type=int, default=2001)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_converge, _parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        _apply_config(args, args._parser)
        return args.func(args)
    except NumericalError as exc:
        print(f"atlas: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AtlasError, OSError) as exc:
        print(f"atlas: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
