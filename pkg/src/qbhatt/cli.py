"""Command-line front end: ``qbhatt bounds | verify | jmatrix``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bhattacharyya import (
    InconsistentInputsError,
    InfoMatrix,
    bound,
    gaussian_j_closed_form,
    information_matrix,
    j_matrix,
)
from .estimators import (
    Estimator,
    VerificationReport,
    counting,
    homodyne,
    theorem3_cubic_local,
    theorem3_square_estimator,
    theorem4_antiholomorphic,
    theorem4_holomorphic,
    theorem4_realvalued,
    verify,
)
from .fock import DEFAULT_TAIL_TOL, DensityOperator, FockOperator, TruncationError, default_dim
from .gfunc import GFunction, SpecError, parse_complex, parse_g, parse_operator
from .logderiv import SingularStateError, solve
from .model import ParamKind, SampledModel, UnsupportedOrderError, gaussian_model, lattice_derivatives

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# -- serialization -----------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def to_jsonable(obj):
    """Plain JSON types; complex numbers become ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(k) + ": " + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(x) -> str:
    if isinstance(x, float):
        return _fmt_float(x) if math.isfinite(x) else ""
    if x is None:
        return ""
    return str(x)


def to_csv(meta: dict, columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    for key, value in meta.items():
        if key != "schema_version":
            buf.write(f"# {key}: {json.dumps(to_jsonable(value), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


# -- configuration -----------------------------------------------------------------------


def parse_grid(text: str) -> list[complex]:
    """Comma list of (complex) literals, or ``start:stop:count`` on the real line."""
    text = text.strip()
    if not text:
        raise ConfigError("empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range grid must be start:stop:count, got {text!r}")
        try:
            a, b = parse_complex(parts[0]), parse_complex(parts[1])
            n = int(parts[2])
        except (SpecError, ValueError) as e:
            raise ConfigError(f"bad grid {text!r}: {e}") from None
        if n < 1:
            raise ConfigError("grid count must be positive")
        if n == 1:
            return [a]
        return [a + (b - a) * i / (n - 1) for i in range(n)]
    try:
        return [parse_complex(t) for t in text.split(",")]
    except SpecError as e:
        raise ConfigError(f"bad grid {text!r}: {e}") from None


@dataclass(frozen=True)
class ModelSpec:
    name: str
    N: float | None = None
    path: str | None = None


def parse_model(text: str, N: float | None) -> ModelSpec:
    if text == "gaussian":
        if N is None or not N > 0:
            raise ConfigError("--model gaussian needs --N > 0")
        return ModelSpec("gaussian", N=N)
    if text.startswith("file:"):
        return ModelSpec("file", path=text[5:])
    raise ConfigError(f"unknown model {text!r}; use 'gaussian' or 'file:<path>'")


def load_matrix_model(path: str) -> SampledModel:
    """JSON ``{"dim", "kind", "samples": [{"param", "rho"}]}`` with ``rho`` as ``[re, im]`` pairs."""
    try:
        with open(path) as fh:
            data = json.load(fh)
        dim = int(data["dim"])
        dim_b = int(data.get("dim_b", 0))
        kind = ParamKind(data.get("kind", "real"))
        samples = {}
        for s in data["samples"]:
            p = s["param"]
            param = complex(p[0], p[1]) if isinstance(p, list) else complex(p)
            m = np.asarray(s["rho"], dtype=float)
            rho = m[..., 0] + 1j * m[..., 1]
            n = dim * (dim_b or 1)
            if rho.shape != (n, n):
                raise ConfigError(f"sample at {param} has shape {rho.shape}, expected {(n, n)}")
            samples[param] = DensityOperator(FockOperator(rho, dim, dim_b), 1.0 - float(np.trace(rho).real))
    except (OSError, KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"cannot read matrix model {path!r}: {e}") from None
    if not samples:
        raise ConfigError("matrix model has no samples")
    return SampledModel(kind, samples, (dim, dim_b), name=f"file:{path}")


def _kind_for(flavor: str) -> str:
    return "real" if flavor == "S" else "complex"


def _flavors(arg: str, kind: str) -> list[str]:
    if arg == "all":
        return ["S"] if kind == "real" else ["R", "L"]
    fl = arg.upper()
    if _kind_for(fl) != kind:
        raise ConfigError(f"flavor {arg} needs a {_kind_for(fl)} parameter, model is {kind}")
    return [fl]


def _check_grid_kind(grid: Sequence[complex], kind: str) -> None:
    if kind == "real" and any(abs(z.imag) > 0 for z in grid):
        raise ConfigError("real-parameter runs need a real grid")


def _param_out(z: complex, kind: str):
    return z.real if kind == "real" else z


def _pmap(fn: Callable, items: Sequence, jobs: int | None) -> list:
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))  # map keeps input order


def _gaussian_dim(args, N: float, grid: Sequence[complex]) -> int:
    if args.dim:
        return args.dim
    rmax = max(abs(z) for z in grid)
    # room for finite-difference stencils around every grid point
    return max(60, default_dim(N, rmax + 0.1, args.tol))


class _Backend:
    """Information matrices for one model, numerically or from closed forms."""

    def __init__(self, spec: ModelSpec, args, kind: str, grid: Sequence[complex]):
        self.spec = spec
        self.kind = kind
        self.source = args.source
        if spec.name == "gaussian":
            self.dim = _gaussian_dim(args, spec.N, grid)
            self.model = gaussian_model(spec.N, kind, self.dim, tol=args.tol)
        else:
            self.model = load_matrix_model(spec.path)
            if self.model.kind.value != kind:
                raise ConfigError(f"matrix model is {self.model.kind.value}, run needs {kind}")
            if self.source == "closed-form":
                raise ConfigError("closed-form source is only available for the gaussian model")
            for z in grid:
                try:
                    self.model.state(z)
                except ValueError as e:
                    raise ConfigError(str(e)) from None
            self.dim = self.model.dims[0]

    def closed_form(self, k: int, flavor: str) -> InfoMatrix | None:
        if self.spec.name != "gaussian":
            return None
        return gaussian_j_closed_form(self.spec.N, k, flavor)

    def numerical(self, param: complex, k: int, flavor: str) -> InfoMatrix:
        p = _param_out(param, self.kind)
        if self.spec.name == "gaussian":
            return information_matrix(self.model, p, k, flavor)
        rho = self.model.state(p)
        return j_matrix(rho, solve(rho, lattice_derivatives(self.model, p, k), flavor))

    def matrix(self, param: complex, k: int, flavor: str) -> InfoMatrix:
        if self.source == "closed-form":
            return self.closed_form(k, flavor)
        return self.numerical(param, k, flavor)


def _meta(command: str, args, extra: dict) -> dict:
    meta = {"schema_version": SCHEMA_VERSION, "command": command, "qbhatt_version": __version__}
    meta.update(extra)
    return meta


def _model_meta(spec: ModelSpec) -> dict:
    return {"name": spec.name, "N": spec.N} if spec.name == "gaussian" else {"name": spec.name, "path": spec.path}


# -- commands ----------------------------------------------------------------------------

BOUNDS_COLUMNS = ("param_re", "param_im", "flavor", "k", "bound", "condition_number", "source", "warnings")


def cmd_bounds(args) -> tuple[dict, list, list]:
    spec = parse_model(args.model, args.N)
    grid = parse_grid(args.grid)
    if args.flavor == "all":
        kind = parse_g(args.g).kind
    else:
        kind = _kind_for(args.flavor.upper())
    g = parse_g(args.g, kind)
    _check_grid_kind(grid, kind)
    flavors = _flavors(args.flavor, kind)
    backend = _Backend(spec, args, kind, grid)

    def one(param):
        out = []
        for fl in flavors:
            J = backend.matrix(param, args.k, fl)
            for k in range(1, args.k + 1):
                Jk = J.truncated(k)
                b = bound(g, _param_out(param, kind), Jk)
                out.append(
                    {
                        "param": _param_out(param, kind),
                        "flavor": fl,
                        "k": k,
                        "bound": b.value,
                        "condition_number": b.condition_number,
                        "source": J.source,
                        "warnings": list(b.warnings),
                    }
                )
        return out

    rows = [r for chunk in _pmap(one, grid, args.jobs) for r in chunk]
    meta = _meta(
        "bounds",
        args,
        {"model": _model_meta(spec), "g": g.render(), "kind": kind, "k": args.k, "dim": backend.dim},
    )
    csv_rows = [
        [complex(r["param"]).real, complex(r["param"]).imag, r["flavor"], r["k"], r["bound"],
         r["condition_number"], r["source"], ";".join(r["warnings"])]
        for r in rows
    ]
    return {**meta, "rows": rows}, list(BOUNDS_COLUMNS), csv_rows


JMATRIX_COLUMNS = (
    "param_re", "param_im", "flavor", "k", "row", "col", "value_re", "value_im",
    "closed_form_re", "closed_form_im", "delta",
)


def _label(lab) -> str:
    return f"({lab[0]},{lab[1]})" if isinstance(lab, tuple) else str(lab)


def cmd_jmatrix(args) -> tuple[dict, list, list]:
    spec = parse_model(args.model, args.N)
    grid = parse_grid(args.grid)
    if args.flavor == "all":
        kind = "real" if all(z.imag == 0 for z in grid) else "complex"
        if spec.name == "file":
            kind = load_matrix_model(spec.path).kind.value
        flavors = ["S"] if kind == "real" else ["R", "L"]
    else:
        flavors = [args.flavor.upper()]
        kind = _kind_for(flavors[0])
    _check_grid_kind(grid, kind)
    backend = _Backend(spec, args, kind, grid)

    def one(param):
        out = []
        for fl in flavors:
            J = backend.matrix(param, args.k, fl)
            C = backend.closed_form(args.k, fl)
            delta = None if C is None else float(np.max(np.abs(J.matrix - C.matrix)))
            out.append(
                {
                    "param": _param_out(param, kind),
                    "flavor": fl,
                    "k": args.k,
                    "labels": [_label(x) for x in J.labels],
                    "matrix": J.matrix,
                    "closed_form": None if C is None else C.matrix,
                    "max_delta": delta,
                    "condition_number": J.condition_number(),
                    "source": J.source,
                }
            )
        return out

    entries = [to_jsonable(r) for chunk in _pmap(one, grid, args.jobs) for r in chunk]
    meta = _meta("jmatrix", args, {"model": _model_meta(spec), "kind": kind, "k": args.k, "dim": backend.dim})
    csv_rows = []
    for e in entries:
        p = e["param"] if isinstance(e["param"], list) else [e["param"], 0.0]
        for i, ri in enumerate(e["labels"]):
            for j, cj in enumerate(e["labels"]):
                v = e["matrix"][i][j]
                c = e["closed_form"][i][j] if e["closed_form"] is not None else None
                d = None if c is None else math.hypot(v[0] - c[0], v[1] - c[1])
                csv_rows.append(
                    [p[0], p[1], e["flavor"], e["k"], ri, cj, v[0], v[1],
                     None if c is None else c[0], None if c is None else c[1], d]
                )
    return {**meta, "entries": entries}, list(JMATRIX_COLUMNS), csv_rows


NAMED_ESTIMATORS = {
    "theorem3-square": "theta^2",
    "theorem3-cubic": "theta^3",
    "homodyne": "theta",
    "counting": "zeta*conj(zeta)",
    "holomorphic": "zeta^2",
    "antiholomorphic": "conj(zeta)^2",
    "realvalued": "zeta*conj(zeta)",
}


def build_estimator(name: str, g: GFunction, N: float, param=None) -> Estimator:
    if name == "theorem3-square":
        return theorem3_square_estimator(N)
    if name == "theorem3-cubic":
        return theorem3_cubic_local(N, float(np.real(param)))
    if name == "homodyne":
        return homodyne()
    if name == "counting":
        return counting(N)
    if name == "holomorphic":
        return theorem4_holomorphic(g)
    if name == "antiholomorphic":
        return theorem4_antiholomorphic(g)
    if name == "realvalued":
        return theorem4_realvalued(g, N)
    poly = parse_operator(name)
    return Estimator(poly, name, requires_ancilla=poly.uses_ancilla)


VERIFY_COLUMNS = (
    "param_re", "param_im", "expectation_re", "expectation_im", "bias_re", "bias_im",
    "bias_numeric_re", "bias_numeric_im", "v1", "v2", "v1_numeric", "v2_numeric",
    "bound_1", "bound_2", "gap_1", "gap_2", "trace_deficit",
)


def merge_reports(parts: Sequence[VerificationReport]) -> VerificationReport:
    first = parts[0]
    checks = {}
    for rep in parts:
        for key, ok in rep.checks.items():
            checks[key] = checks.get(key, True) and ok
    return VerificationReport(
        estimator=first.estimator.split("@")[0],
        g=first.g,
        N=first.N,
        k=first.k,
        flavors=first.flavors,
        dims=first.dims,
        rows=tuple(r for rep in parts for r in rep.rows),
        self_adjoint=all(rep.self_adjoint for rep in parts),
        normality_residual=max(rep.normality_residual for rep in parts),
        checks=checks,
    )


def cmd_verify(args) -> tuple[dict, list, list, VerificationReport]:
    spec = parse_model(args.model, args.N if args.N is not None else 1.0)
    if spec.name != "gaussian":
        raise ConfigError("verify supports only the gaussian model")
    N = spec.N
    g = parse_g(args.g or NAMED_ESTIMATORS.get(args.estimator, "zeta*conj(zeta)"))
    default_grid = "0,0.3,0.6" if g.kind == "real" else "0,0.5,0.3+0.2i"
    grid = parse_grid(args.grid or default_grid)
    _check_grid_kind(grid, g.kind)
    try:
        proto = build_estimator(args.estimator, g, N, grid[0])
    except SpecError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None
    dims = None
    if args.dim:
        dims = (args.dim, args.dim_b or 0)
    elif args.dim_b:
        dims = (max(60, default_dim(N, max(abs(z) for z in grid), args.tol)), args.dim_b)
    local = args.estimator == "theorem3-cubic"

    def one(param):
        est = build_estimator(args.estimator, g, N, param) if local else proto
        return verify(
            est, N, g, [_param_out(param, g.kind)], dims=dims, k=args.k,
            tail_tol=args.tol, gap_tol=args.gap_tol,
        )

    report = merge_reports(_pmap(one, grid, args.jobs))
    meta = _meta(
        "verify",
        args,
        {
            "model": _model_meta(spec),
            "estimator": report.estimator,
            "g": report.g,
            "k": report.k,
            "flavors": list(report.flavors),
            "dims": list(report.dims),
        },
    )
    rows = []
    csv_rows = []
    for r in report.rows:
        d = {
            "param": r.param,
            "expectation": r.expectation,
            "bias": r.bias,
            "bias_numeric": r.bias_numeric,
            "v1": r.v1,
            "v2": r.v2,
            "v1_numeric": r.v1_numeric,
            "v2_numeric": r.v2_numeric,
            "bound_1": r.bound_1,
            "bound_2": r.bound_2,
            "gap_1": r.gap_1,
            "gap_2": r.gap_2,
            "trace_deficit": r.trace_deficit,
        }
        rows.append(d)
        p = complex(r.param)
        csv_rows.append(
            [p.real, p.imag, r.expectation.real, r.expectation.imag, r.bias.real, r.bias.imag,
             r.bias_numeric.real, r.bias_numeric.imag, r.v1, r.v2, r.v1_numeric, r.v2_numeric,
             r.bound_1, r.bound_2, r.gap_1, r.gap_2, r.trace_deficit]
        )
    body = {
        **meta,
        "self_adjoint": report.self_adjoint,
        "normality_residual": report.normality_residual,
        "checks": dict(report.checks),
        "passed": report.passed,
        "rows": rows,
    }
    return body, list(VERIFY_COLUMNS), csv_rows, report


# -- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="gaussian", help="'gaussian' or 'file:<path>'")
    common.add_argument("--N", type=float, default=None, help="thermal photon number of the gaussian model")
    common.add_argument("--k", type=int, default=None, help="Bhattacharyya order, 1..3 (default 2; verify: deg g)")
    common.add_argument("--flavor", default="all", choices=["s", "r", "l", "all", "S", "R", "L"])
    common.add_argument("--dim", type=int, default=None, help="system Fock truncation")
    common.add_argument("--dim-b", type=int, default=None, help="ancilla Fock truncation")
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")
    common.add_argument("--format", default="json", choices=["json", "csv"])
    common.add_argument("--jobs", type=int, default=None, help="worker threads (default: CPU count)")
    common.add_argument("--tol", type=float, default=DEFAULT_TAIL_TOL, help="trace-deficit tolerance")
    common.add_argument(
        "--source", default="numerical", choices=["numerical", "closed-form"],
        help="information matrices from the numerical pipeline or gaussian closed forms",
    )

    parser = argparse.ArgumentParser(prog="qbhatt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qbhatt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common], help="bound sweep over a parameter grid")
    b.add_argument("--g", required=True, help="polynomial in theta, or in zeta and conj(zeta)")
    b.add_argument("--grid", required=True, help="comma list or start:stop:count")

    v = sub.add_parser("verify", parents=[common], help="verify an estimator on a grid")
    v.add_argument("--estimator", required=True, help="named estimator or ladder-operator polynomial")
    v.add_argument("--g", default=None)
    v.add_argument("--grid", default=None)
    v.add_argument("--gap-tol", type=float, default=1e-5)

    j = sub.add_parser("jmatrix", parents=[common], help="dump information matrices")
    j.add_argument("--grid", required=True)
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.k is not None and not 1 <= args.k <= 3:
            raise ConfigError("--k must be in 1..3")
        if args.dim is not None and args.dim < 2:
            raise ConfigError("--dim must be at least 2")
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        args.flavor = args.flavor.lower()
        if args.k is None and args.command != "verify":
            args.k = 2
        report = None
        if args.command == "bounds":
            body, cols, rows = cmd_bounds(args)
        elif args.command == "jmatrix":
            body, cols, rows = cmd_jmatrix(args)
        else:
            body, cols, rows, report = cmd_verify(args)
    except (ConfigError, SpecError, UnsupportedOrderError) as e:
        print(f"qbhatt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, SingularStateError, InconsistentInputsError, np.linalg.LinAlgError) as e:
        print(f"qbhatt: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC

    if args.format == "json":
        text = dumps(to_jsonable(body)) + "\n"
    else:
        meta = {k: v for k, v in body.items() if k not in ("rows", "entries")}
        text = to_csv(meta, cols, rows)
    _emit(text, args.out)

    if report is not None:
        for key, ok in report.checks.items():
            print(f"{'PASS' if ok else 'FAIL'} {key}", file=sys.stderr)
        worst_bias = max(abs(r.bias) for r in report.rows)
        print(f"{'PASS' if report.passed else 'FAIL'} {report.estimator} (max |bias| {worst_bias:.3g})", file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
