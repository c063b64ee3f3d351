"""Batch command-line front end.

    rtmodes classify    --config cfg.json
    rtmodes dispersion  --config cfg.json --xi-max 4 --out disp.csv
    rtmodes sharp-rate  --config cfg.json
    rtmodes mode        --config cfg.json --xi 1 0 --time 0.5 --out mode
    rtmodes convergence --config cfg.json --xi 1.0 --meshes 16,32,64

Exit codes: 0 success, 2 input error, 3 regime precondition, 4 numerical failure.
Data outputs are byte-deterministic; run metadata (timestamps, hashes) goes
to a ``<out>.manifest.json`` sidecar next to the data file.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .discretize import build_mesh
from .eigen import EigenConvergenceError
from .geometry import DegenerateJacobian, IllConditioned, push_mode_to_physical, vandermonde_coeffs
from .growth import (
    BracketFailure,
    NotUnstable,
    TruncationWarning,
    Unstable,
    convergence_study,
    dispersion_curve,
    sharp_rate,
)
from .modes import GridSpec, ModeError, build_mode, sample_fields, scale_mode
from .params import (
    ConfigError,
    FluidConfig,
    Frequency,
    NotApplicable,
    classify_regime,
    growth_ceiling,
    jump_density,
    lattice_frequencies,
    proof_bound_sq,
    sigma_critical,
    xi_critical,
)

EXIT_OK, EXIT_INPUT, EXIT_REGIME, EXIT_NUMERIC = 0, 2, 3, 4

DISPERSION_COLUMNS = (
    "n1",
    "n2",
    "xi1",
    "xi2",
    "xi_abs",
    "verdict",
    "lambda",
    "s_star",
    "alpha_at_star",
    "ceiling_bound",
    "proof_bound",
    "error",
)


class InputError(ValueError):
    pass


class RegimeError(RuntimeError):
    pass


def fmt(x) -> str:
    """17 significant digits: round-trips every float64."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return fmt(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.floating):
        return _jsonable(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a finite number > 0, got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return v


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 2:
        raise argparse.ArgumentTypeError("mesh sizes must be integers >= 2")
    return vals


def _grid(text):
    vals = _int_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("grid spec is n1,n2,n3")
    return GridSpec(*vals)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON file with the fluid parameters")
    common.add_argument("--mesh", type=_positive_int, default=128, help="elements per layer (default 128)")
    common.add_argument("--tol", type=_positive_float, default=1e-10, help="relative bisection tolerance")
    common.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", default=None, help="output format (command dependent)")

    p = argparse.ArgumentParser(prog="rtmodes", description="Linear Rayleigh-Taylor modes of two viscous layers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("classify", parents=[common], help="stability regime and critical quantities")

    d = sub.add_parser("dispersion", parents=[common], help="growth rate per lattice frequency")
    d.add_argument("--xi-max", type=_positive_float, default=None, help="largest |xi| (default |xi|_c or 8 / min(L))")

    sub.add_parser("sharp-rate", parents=[common], help="largest growth rate (lattice and envelope)")

    m = sub.add_parser("mode", parents=[common], help="export a growing-mode field")
    m.add_argument("--xi", nargs=2, type=int, required=True, metavar=("N1", "N2"))
    m.add_argument("--time", type=_nonneg_float, default=0.0)
    m.add_argument("--grid", type=_grid, default=GridSpec(16, 16, 33), help="n1,n2,n3 (default 16,16,33)")
    m.add_argument("--physical", action="store_true", help="map coordinates through Theta")
    m.add_argument("--normalization", choices=("J", "unit_norm"), default="J")
    m.add_argument(
        "--eta-max",
        type=_positive_float,
        default=None,
        help="rescale so max(|eta_+|, |eta_-|) at t = 0 equals this (default 0.01 with --physical)",
    )

    c = sub.add_parser("convergence", parents=[common], help="mesh convergence of lambda at one |xi|")
    c.add_argument("--xi", type=_positive_float, required=True, help="|xi|")
    c.add_argument("--meshes", type=_int_list, default=[16, 32, 64], help="comma-separated elements per layer")
    return p


FORMATS = {
    "classify": ("text", "json"),
    "dispersion": ("csv", "json"),
    "sharp-rate": ("json",),
    "mode": ("bin", "csv"),
    "convergence": ("csv", "json"),
}


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------


def _emit(text: str, out: str | None, stdout) -> None:
    if out is None:
        stdout.write(text)
    else:
        Path(out).write_text(text)


def _manifest(args, cfg: FluidConfig, outputs: list[str]) -> None:
    if args.out is None:
        return
    inputs = {
        "command": args.command,
        "config": cfg.to_dict(),
        "mesh": args.mesh,
        "tol": args.tol,
        "extra": {k: _arg_value(v) for k, v in sorted(vars(args).items()) if k not in ("config", "out", "threads", "command", "mesh", "tol")},
    }
    digest = hashlib.sha256(json.dumps(_jsonable(inputs), sort_keys=True).encode()).hexdigest()
    now = _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest = {
        "version": __version__,
        "inputs": inputs,
        "input_sha256": digest,
        "outputs": outputs,
        "threads": args.threads,
        "created": now,
    }
    Path(str(args.out) + ".manifest.json").write_text(dumps(manifest))


def _arg_value(v):
    if isinstance(v, GridSpec):
        return [v.n1, v.n2, v.n3]
    return v


def _load_config(path) -> FluidConfig:
    try:
        return FluidConfig.from_json(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except IsADirectoryError:
        raise InputError(f"{path}: is a directory") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def classify_report(cfg: FluidConfig) -> dict:
    regime = classify_regime(cfg)
    try:
        sc = sigma_critical(cfg)
    except NotApplicable:
        sc = None
    try:
        xc = xi_critical(cfg)
    except NotApplicable:
        xc = None
    if xc is None:
        count = 0
    elif math.isinf(xc):
        count = math.inf
    else:
        count = sum(1 for f in lattice_frequencies(cfg, xc) if f.magnitude < xc)
    return {
        "regime": regime.label.value,
        "jump_density": jump_density(cfg),
        "sigma_c": sc,
        "xi_c": xc,
        "st_case": regime.st_case,
        "subcritical_frequencies": count,
    }


def cmd_classify(args, cfg, stdout) -> int:
    rep = classify_report(cfg)
    fmt_ = args.format or "text"
    if fmt_ == "json":
        text = dumps(rep)
    else:
        lines = [
            f"regime: {rep['regime']}",
            f"jump_density: {fmt(rep['jump_density'])}",
            f"sigma_c: {'n/a' if rep['sigma_c'] is None else fmt(rep['sigma_c'])}",
            f"xi_c: {'n/a' if rep['xi_c'] is None else fmt(rep['xi_c'])}",
            f"st_case: {rep['st_case']}",
            f"subcritical_frequencies: {fmt(rep['subcritical_frequencies'])}",
        ]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out, stdout)
    _manifest(args, cfg, [args.out] if args.out else [])
    return EXIT_OK


def _default_xi_max(cfg: FluidConfig) -> float:
    try:
        xc = xi_critical(cfg)
    except NotApplicable:
        xc = math.inf
    if math.isfinite(xc):
        return xc
    return 8.0 / min(cfg.L1, cfg.L2)


def dispersion_rows(points, cfg: FluidConfig) -> list[dict]:
    ceiling = growth_ceiling(cfg)
    rows = []
    for p in points:
        bound_sq = proof_bound_sq(cfg, p.xi_abs)
        row = {
            "n1": p.xi.n1,
            "n2": p.xi.n2,
            "xi1": p.xi.xi1,
            "xi2": p.xi.xi2,
            "xi_abs": p.xi_abs,
            "verdict": "error" if p.error else p.result.verdict,
            "lambda": None,
            "s_star": None,
            "alpha_at_star": None,
            "ceiling_bound": ceiling,
            "proof_bound": math.sqrt(bound_sq) if bound_sq > 0 else 0.0,
            "error": p.error or "",
        }
        if isinstance(p.result, Unstable):
            row.update(**{"lambda": p.result.lam, "s_star": p.result.s_star, "alpha_at_star": p.result.alpha_at_star})
        rows.append(row)
    return rows


def render_rows(rows, columns, fmt_) -> str:
    if fmt_ == "json":
        return dumps([{c: r[c] for c in columns} for r in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else fmt(r[c]) for c in columns])
    return buf.getvalue()


def cmd_dispersion(args, cfg, stdout) -> int:
    xi_max = args.xi_max if args.xi_max is not None else _default_xi_max(cfg)
    freqs = lattice_frequencies(cfg, xi_max)
    if not freqs:
        raise InputError(f"--xi-max {xi_max:.6g}: no nonzero lattice frequency with |xi| <= xi-max")
    mesh = build_mesh(cfg.b, args.mesh, args.mesh)
    points = dispersion_curve(mesh, cfg, freqs, workers=args.threads, tol=args.tol)
    rows = dispersion_rows(points, cfg)
    _emit(render_rows(rows, DISPERSION_COLUMNS, args.format or "csv"), args.out, stdout)
    _manifest(args, cfg, [args.out] if args.out else [])
    if all(p.error for p in points):
        raise EigenConvergenceError("every frequency failed: " + points[0].error)
    return EXIT_OK


def _freq_dict(f):
    if f is None:
        return None
    if isinstance(f, Frequency):
        return {"n1": f.n1, "n2": f.n2, "xi_abs": f.magnitude}
    return {"xi_abs": float(f)}


def cmd_sharp_rate(args, cfg, stdout) -> int:
    mesh = build_mesh(cfg.b, args.mesh, args.mesh)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        try:
            rep = sharp_rate(mesh, cfg, tol=args.tol, workers=args.threads)
        except NotUnstable as exc:
            raise RegimeError(str(exc)) from None
    out = {
        "lattice_max": rep.lattice.value,
        "continuous_envelope": rep.envelope.value,
        "achieved_at": {"lattice": _freq_dict(rep.lattice.achieved_at), "envelope": _freq_dict(rep.envelope.achieved_at)},
        "truncation": rep.lattice.truncation,
        "warnings": [str(w.message) for w in caught if issubclass(w.category, TruncationWarning)],
    }
    _emit(dumps(out), args.out, stdout)
    _manifest(args, cfg, [args.out] if args.out else [])
    return EXIT_OK


def write_fields(base: str, header: dict, arrays: dict, fmt_: str) -> list[str]:
    """JSON header + little-endian float64 sidecar, or a single CSV."""
    base = str(base)
    if fmt_ == "csv":
        names = list(arrays)
        cols = [np.asarray(arrays[n], dtype=float).ravel(order="C") for n in names]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])
        path = base if base.endswith(".csv") else base + ".csv"
        Path(path).write_text(buf.getvalue())
        return [path]
    bin_path = base + ".bin"
    offset = 0
    layout = []
    with open(bin_path, "wb") as fh:
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(a.tobytes(order="C"))
            layout.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
    header = dict(header, binary=os.path.basename(bin_path), dtype="<f8", order="C", arrays=layout)
    json_path = base + ".json"
    Path(json_path).write_text(dumps(header))
    return [json_path, bin_path]


def cmd_mode(args, cfg, stdout) -> int:
    n1, n2 = args.xi
    if n1 == 0 and n2 == 0:
        raise InputError("--xi: the zero frequency carries no mode")
    if args.out is None:
        raise InputError("--out is required for mode (base path of the field files)")
    xi = Frequency(n1, n2, cfg.L1, cfg.L2)
    mesh = build_mesh(cfg.b, args.mesh, args.mesh)
    point = dispersion_curve(mesh, cfg, [xi], tol=args.tol)[0]
    if point.error:
        raise EigenConvergenceError(point.error)
    if not point.unstable:
        raise RegimeError(f"frequency ({n1}, {n2}) with |xi| = {xi.magnitude:.6g} is not unstable")
    mode = build_mode(point, mesh, cfg, normalization=args.normalization)
    eta_max = args.eta_max if args.eta_max is not None else (0.01 if args.physical else None)
    if eta_max is not None:
        peak = max(abs(mode.eta_plus), abs(mode.eta_minus))
        mode = scale_mode(mode, eta_max / peak)
    sample = sample_fields(mode, args.time, args.grid)
    x1, x2, x3 = sample.grid
    arrays = {}
    if args.physical:
        phys = push_mode_to_physical(mode, sample, coeffs=vandermonde_coeffs())
        arrays.update(y1=phys.y[0], y2=phys.y[1], y3=phys.y[2], J_jac=phys.J_jac)
    else:
        X1, X2, X3 = np.meshgrid(x1, x2, x3, indexing="ij")
        arrays.update(x1=X1, x2=X2, x3=X3)
    arrays.update(u1=sample.u[0], u2=sample.u[1], u3=sample.u[2], p=sample.p_tilde)
    header = {
        "grid_shape": [x1.size, x2.size, x3.size],
        "spacing": [x1[1] - x1[0], x2[1] - x2[0], x3[1] - x3[0]],
        "origin": [0.0, 0.0, -cfg.b],
        "time": args.time,
        "lambda": mode.lam,
        "xi": {"n1": n1, "n2": n2, "xi1": xi.xi1, "xi2": xi.xi2, "xi_abs": xi.magnitude},
        "eta_amplitude": {"plus": mode.eta_plus.real, "minus": mode.eta_minus.real},
        "normalization": args.normalization if eta_max is None else f"eta_max={fmt(eta_max)}",
        "physical": bool(args.physical),
    }
    if args.format == "csv":
        header_path = str(args.out) + ".header.json"
        eta_arrays = {"eta_plus": sample.eta[0], "eta_minus": sample.eta[1]}
        outputs = write_fields(args.out, header, arrays, "csv")
        outputs += write_fields(str(args.out) + ".eta", {}, eta_arrays, "csv")
        Path(header_path).write_text(dumps(header))
        outputs.append(header_path)
    else:
        arrays.update(eta_plus=sample.eta[0], eta_minus=sample.eta[1])
        outputs = write_fields(args.out, header, arrays, "bin")
    _manifest(args, cfg, outputs)
    return EXIT_OK


def cmd_convergence(args, cfg, stdout) -> int:
    if len(args.meshes) < 3:
        raise InputError("--meshes: need at least 3 mesh sizes")
    try:
        study = convergence_study(cfg, args.xi, args.meshes, tol=args.tol)
    except NotUnstable as exc:
        raise RegimeError(str(exc)) from None
    rows = [
        {"mesh": n, "lambda": lam, "delta": d, "order": None, "extrapolated": None}
        for n, lam, d in zip(study.meshes, study.lams, study.deltas)
    ]
    rows[-1]["order"] = study.order
    rows[-1]["extrapolated"] = study.extrapolated
    _emit(render_rows(rows, ("mesh", "lambda", "delta", "order", "extrapolated"), args.format or "csv"), args.out, stdout)
    _manifest(args, cfg, [args.out] if args.out else [])
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "dispersion": cmd_dispersion,
    "sharp-rate": cmd_sharp_rate,
    "mode": cmd_mode,
    "convergence": cmd_convergence,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    allowed = FORMATS[args.command]
    if args.format is not None and args.format not in allowed:
        stderr.write(f"error: --format must be one of {', '.join(allowed)} for {args.command}\n")
        return EXIT_INPUT
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg, stdout)
    except (ConfigError, InputError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (RegimeError, NotUnstable, ModeError) as exc:
        stderr.write(f"regime: {exc}\n")
        return EXIT_REGIME
    except DegenerateJacobian as exc:
        stderr.write(f"numerical failure: degenerate Jacobian: {exc}\n")
        return EXIT_NUMERIC
    except (EigenConvergenceError, BracketFailure, IllConditioned, RuntimeError, FloatingPointError) as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
