"""Command line front end: ``qefrate <command> [options]``.

Commands
--------
validate    physical realizability residuals and structural diagnostics
thresholds  quantum and classical risk-sensitivity thresholds
rate        state-space ladder Upsilon_0 .. Upsilon_r at one theta
rate-fd     frequency-domain rate (direct log-determinant or homotopy)
sweep       rates over a list of theta values, CSV or JSON records
coeffs      cascade coefficients as JSON, or the model itself

Errors produce a single ``error code=<n> kind=<name> message=<text>`` line on
stderr and the exit code of the error class.
"""
from __future__ import annotations

import os

_threads = os.environ.get("QEF_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .cascade import SCHEMES, compute_cascade, scheme_weights
from .errors import QefError, ValidationError
from .freqdomain import (model_grid, qef_rate_direct, qef_rate_homotopy,
                         theta_star, theta_zero)
from .model import OqhoModel, bundled_model_path, dump_model, load_model, validate
from .statespace import rate_ladder, rate_sweep

PR_WARN = 1e-8
PR_FAIL = 1e-2
MAX_ORDER = 16
FLOAT_FMT = ".12g"

SWEEP_COLUMNS = ["theta", "r", "method", "scheme", "rate", "valid",
                 "are_residual", "closed_loop_abscissa", "newton_iterations"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), FLOAT_FMT)


def _jsonable(x):
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def warn(kind: str, message: str) -> None:
    print(f"warning kind={kind} message={message}", file=sys.stderr)


def load_checked(path, *, allow_bad_pr: bool = False) -> OqhoModel:
    model = load_model(path)
    diag = validate(model)
    rel = diag.relative_pr_residual(model)
    if rel > PR_FAIL and not allow_bad_pr:
        raise ValidationError(f"relative PR residual {rel:.3e} exceeds {PR_FAIL:g}")
    if rel > PR_WARN:
        warn("PrResidual", f"relative PR residual {rel:.3e}")
    if not diag.spectral_abscissa < 0:
        raise ValidationError(f"A is not Hurwitz (spectral abscissa {diag.spectral_abscissa:.6g})")
    return model


def _grid(model, args):
    return model_grid(model, args.nodes, args.scale)


def _parse_thetas(text: str) -> List[float]:
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad theta list: {text}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty theta list")
    return vals


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from exc
    if not v >= 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("theta must be a finite nonnegative number")
    return v


def _order(text: str) -> int:
    r = int(text)
    if not 0 <= r <= MAX_ORDER:
        raise argparse.ArgumentTypeError(f"order must lie in [0, {MAX_ORDER}]")
    return r


def emit_records(records: List[dict], columns: List[str], fmt_name: str, out) -> None:
    if fmt_name == "json":
        clean = [{k: _jsonable(r.get(k)) for k in columns} for r in records]
        out.write(json.dumps(clean, indent=1) + "\n")
        return
    if fmt_name == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([fmt(r.get(k)) for k in columns])
        return
    widths = {k: max(len(k), *(len(fmt(r.get(k))) for r in records)) if records else len(k)
              for k in columns}
    out.write("  ".join(k.rjust(widths[k]) for k in columns) + "\n")
    for r in records:
        out.write("  ".join(fmt(r.get(k)).rjust(widths[k]) for k in columns) + "\n")


def emit_mapping(values: dict, fmt_name: str, out) -> None:
    if fmt_name == "json":
        out.write(json.dumps({k: _jsonable(v) for k, v in values.items()}, indent=1) + "\n")
    elif fmt_name == "csv":
        emit_records([values], list(values), "csv", out)
    else:
        for k, v in values.items():
            out.write(f"{k}={fmt(v)}\n")


# -- commands -------------------------------------------------------------

def cmd_validate(args, out) -> int:
    model = load_model(args.model)
    diag = validate(model)
    values = {
        "n": model.n, "m": model.m,
        "pr1_residual": diag.pr1_residual,
        "pr2_residual": diag.pr2_residual,
        "relative_pr_residual": diag.relative_pr_residual(model),
        "spectral_abscissa": diag.spectral_abscissa,
        "mho_condition": diag.mho_condition,
        "bbt_min_eigenvalue": diag.bbt_min_eigenvalue,
        "theta_condition": diag.theta_condition,
    }
    emit_mapping(values, args.format, out)
    # surface the same hard failures as the computing commands
    load_checked(args.model)
    return 0


def cmd_thresholds(args, out) -> int:
    model = load_checked(args.model)
    grid = _grid(model, args)
    emit_mapping({"theta_star": theta_star(model, grid),
                  "theta_zero": theta_zero(model, grid)}, args.format, out)
    return 0


def cmd_rate(args, out) -> int:
    model = load_checked(args.model)
    results = rate_ladder(model, args.theta, args.order, args.scheme)
    records = [dict(res.row(), method="ss") for res in results]
    emit_records(records, SWEEP_COLUMNS, args.format, out)
    return 0


def cmd_rate_fd(args, out) -> int:
    model = load_checked(args.model)
    grid = _grid(model, args)
    if args.method == "direct":
        rate = qef_rate_direct(model, args.theta, grid)
    else:
        rate = qef_rate_homotopy(model, args.theta, grid, args.theta_steps)
    emit_mapping({"theta": args.theta, "method": args.method, "rate": rate,
                  "nodes": len(grid), "scale": grid.scale}, args.format, out)
    return 0


def cmd_sweep(args, out) -> int:
    model = load_checked(args.model)
    thetas = list(args.thetas)
    grid = None
    if args.relative or args.fd:
        grid = _grid(model, args)
    if args.relative:
        ts = theta_star(model, grid)
        thetas = [t * ts for t in thetas]
    if any(b < a for a, b in zip(thetas, thetas[1:])) or any(t < 0 for t in thetas):
        raise ValidationError("thetas must be nonnegative and ascending")
    records = []
    schemes = ["taylor", "sqrtpoly"] if args.scheme == "both" else [args.scheme]
    for scheme in schemes:
        for r in range(args.order + 1):
            for res in rate_sweep(model, thetas, r, scheme):
                records.append(dict(res.row(), method="ss"))
    if args.fd:
        for t in thetas:
            rec = {"theta": t, "r": None, "method": "direct", "scheme": None}
            try:
                rec.update(rate=qef_rate_direct(model, t, grid), valid=True)
            except QefError:
                rec.update(rate=float("nan"), valid=False)
            records.append(rec)
    emit_records(records, SWEEP_COLUMNS, args.format, out)
    return 0


def _mats(ms):
    return [m.tolist() for m in ms]


def cmd_coeffs(args, out) -> int:
    if args.dump_model:
        out.write(dump_model(load_model(args.model)) + "\n")
        return 0
    model = load_checked(args.model)
    c = compute_cascade(model, args.order)
    payload = {
        "r": c.r, "n": c.n,
        "alpha": _mats(c.alpha), "beta": _mats(c.beta), "gamma": _mats(c.gamma),
        "gamma_condition_numbers": c.gamma_condition_numbers,
        "beta_defect": c.beta_defect, "gamma_defect": c.gamma_defect,
        "scheme_weights": {k: scheme_weights(k, args.order).weights.tolist() for k in SCHEMES},
    }
    out.write(json.dumps(payload, indent=1) + "\n")
    return 0


COMMANDS = {
    "validate": cmd_validate, "thresholds": cmd_thresholds, "rate": cmd_rate,
    "rate-fd": cmd_rate_fd, "sweep": cmd_sweep, "coeffs": cmd_coeffs,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=str(bundled_model_path()),
                        help="model JSON file (default: bundled two-mode example)")
    common.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")
    common.add_argument("--format", choices=["text", "csv", "json"], default=None,
                        help="output format (default: text, csv for sweep)")
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--nodes", type=int, default=2048, help="frequency grid size")
    grid.add_argument("--scale", type=float, default=None,
                      help="grid compactification scale (default: spectral radius of A)")
    ss = argparse.ArgumentParser(add_help=False)
    ss.add_argument("--order", "-r", type=_order, default=3, help="truncation order r")
    ss.add_argument("--scheme", choices=["taylor", "sqrtpoly"], default="taylor")

    p = argparse.ArgumentParser(prog="qefrate", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="model diagnostics")
    sub.add_parser("thresholds", parents=[common, grid], help="theta* and theta_0")
    sp = sub.add_parser("rate", parents=[common, ss], help="state-space ladder")
    sp.add_argument("--theta", type=_nonneg_float, required=True)
    sp = sub.add_parser("rate-fd", parents=[common, grid], help="frequency-domain rate")
    sp.add_argument("--theta", type=_nonneg_float, required=True)
    sp.add_argument("--method", choices=["direct", "homotopy"], default="direct")
    sp.add_argument("--theta-steps", type=int, default=200, help="RK4 steps for homotopy")
    sp = sub.add_parser("sweep", parents=[common, grid], help="rates over many theta")
    sp.add_argument("--thetas", type=_parse_thetas, required=True,
                    help="comma separated ascending values")
    sp.add_argument("--relative", action="store_true",
                    help="read --thetas as multiples of theta*")
    sp.add_argument("--order", "-r", type=_order, default=3)
    sp.add_argument("--scheme", choices=["taylor", "sqrtpoly", "both"], default="taylor")
    sp.add_argument("--fd", action="store_true", help="add frequency-domain records")
    sp = sub.add_parser("coeffs", parents=[common], help="cascade coefficients")
    sp.add_argument("--order", "-r", type=_order, default=3)
    sp.add_argument("--dump-model", action="store_true",
                    help="write the parsed model as JSON instead")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command == "sweep" else "text"
    buf = io.StringIO()
    try:
        code = COMMANDS[args.command](args, buf)
    except QefError as exc:
        msg = " ".join(str(exc).split())
        print(f"error code={exc.exit_code} kind={type(exc).__name__} message={msg}",
              file=sys.stderr)
        return exc.exit_code
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
