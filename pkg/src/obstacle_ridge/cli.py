"""Command-line front end.

Exit codes: 0 success / band satisfied, 1 acceptance band violated,
2 input error, 3 internal (numerical) failure.

Every artifact starts with (or, for JSON, contains) the effective
configuration. The thread count is a scheduling hint only and is left out of
the echo so outputs are byte-identical for any value of ``--threads``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import GeometryError, ObstacleRidgeError, ParamError, ShapeError
from .estimator import (Dataset, Schedule, erm_fit, fit, load_model, model_to_dict, predict, schedule_params,
                        smoothed_predict)
from .obstacle import sphere_quadrature

log = logging.getLogger("obstacle_ridge")

EXIT_OK, EXIT_BAND, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "OBSTACLE_RIDGE_THREADS"


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


# --- CSV I/O ---------------------------------------------------------------

def read_xy_csv(path, require_y: bool = True, d: int | None = None):
    """Read a CSV with header ``x1,...,xd[,y]``. Lines starting with '#' are skipped.

    Returns (X, y) with y None when the file has no y column. Errors name the
    1-based line and column of the first offending field.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text))) if r and not r[0].startswith("#")]
    if not rows:
        raise InputError(f"{path}: empty file")
    line, header = rows[0]
    header = [h.strip() for h in header]
    has_y = header[-1] == "y"
    names = header[:-1] if has_y else header
    dim = len(names)
    if names != [f"x{j + 1}" for j in range(dim)] or dim == 0:
        raise InputError(f"{path}: line {line}: header must be x1,...,xd{',y' if require_y else '[,y]'}, got {','.join(header)}")
    if require_y and not has_y:
        raise InputError(f"{path}: line {line}: missing y column")
    if d is not None and dim != d:
        raise InputError(f"{path}: line {line}: expected dimension {d}, header has {dim}")
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows")
    out = np.empty((len(rows) - 1, len(header)))
    for r, (line, fields) in enumerate(rows[1:]):
        if len(fields) != len(header):
            raise InputError(f"{path}: line {line}: expected {len(header)} fields, got {len(fields)}")
        for c, tok in enumerate(fields):
            try:
                v = float(tok)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise InputError(f"{path}: line {line}, column {c + 1} ({header[c]}): not a finite number: {tok!r}")
            out[r, c] = v
    return (out[:, :dim], out[:, dim]) if has_y else (out, None)


def _config_line(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True)


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _fmt(v) -> str:
    return repr(float(v))


# --- argument helpers ---------------------------------------------------------

def _int_list(s: str) -> list:
    try:
        return [int(v) for v in s.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {s!r}") from exc


def _resolve_threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get(THREADS_ENV, "1")
    try:
        t = int(raw)
    except ValueError as exc:
        raise InputError(f"thread count must be an integer, got {raw!r}") from exc
    if t < 1:
        raise InputError(f"thread count must be >= 1, got {t}")
    return t


def _echo(args, drop=()) -> dict:
    """Effective configuration: every parsed flag except the thread hint, output path and verbosity."""
    skip = {"threads", "out", "func", "verbose", *drop}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _schedule_flags(p, lambda0=0.25):
    p.add_argument("--d", type=int, default=3, help="ambient dimension (>= 3)")
    p.add_argument("--gamma0", type=float, default=1.0, help="threshold schedule constant")
    p.add_argument("--lambda0", type=float, default=lambda0, help="ridge schedule constant")
    p.add_argument("--linked", action="store_true", help="use lambda = kappa * gamma^(2/(2-d))")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--quad-level", type=int, default=3, help="sphere quadrature refinement level")
    p.add_argument("--seed", type=int, default=0, help="master seed (the target seed in studies)")


def _common_flags(p):
    p.add_argument("--threads", type=int, default=None, help=f"worker count hint (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    p.add_argument("-v", "--verbose", action="store_true")


# --- subcommands ---------------------------------------------------------------

def cmd_fit(args) -> int:
    threads = _resolve_threads(args)
    if args.out is None:
        raise InputError("fit needs --out for the model file")
    X, y = read_xy_csv(args.data, require_y=True, d=args.d)
    ds = Dataset(X, y)
    sched = Schedule(args.gamma0, args.lambda0, args.mode, ds.d, args.linked, args.kappa)
    gamma, lam = schedule_params(sched, ds.n)
    gamma = args.gamma if args.gamma is not None else gamma
    lam = args.lam if args.lam is not None else lam
    q = sphere_quadrature(ds.d, args.quad_level, seed=args.seed)
    if args.mode == "erm":
        if args.erm_bound is None:
            raise InputError("--mode erm needs --erm-bound")
        m = erm_fit(ds, gamma, args.erm_bound, q, threads=threads)
    else:
        m = fit(ds, gamma, lam, q, threads=threads)
    cfg = _echo(args)
    cfg.update(d=ds.d, n=ds.n, gamma_effective=m.gamma, lambda_effective=m.lam)
    m = replace(m, config=cfg)
    doc = json.dumps(model_to_dict(m), indent=1) + "\n"
    Path(args.out).write_text(doc, encoding="utf-8")
    print(f"gamma={m.gamma!r} lambda={m.lam!r} n={m.n} jitter={m.jitter!r} norm_sq={m.norm_sq!r}")
    return EXIT_OK


def cmd_predict(args) -> int:
    _resolve_threads(args)
    try:
        m = load_model(args.model)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.model}: cannot load model ({exc})") from exc
    X, _ = read_xy_csv(args.data, require_y=False)
    if X.shape[1] != m.space.dimension:
        raise InputError(f"{args.data}: query dimension {X.shape[1]} does not match model dimension {m.space.dimension}")
    if args.smoothed:
        vals = smoothed_predict(m, X, sphere_quadrature(m.space.dimension, args.quad_level, seed=args.seed))
    else:
        vals = predict(m, X)
    vals = np.atleast_1d(vals)
    buf = io.StringIO()
    buf.write(_config_line(_echo(args)) + "\n")
    buf.write("prediction,prediction_hex\n" if args.hex else "prediction\n")
    for v in vals:
        buf.write(f"{_fmt(v)},{float(v).hex()}\n" if args.hex else f"{_fmt(v)}\n")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _study_config(args, mode):
    from .experiments import ExperimentConfig

    band = tuple(args.band) if args.band is not None else ((-0.55, -0.25) if mode == "ridge" else (-0.50, -0.17))
    return ExperimentConfig(
        d=args.d, n_grid=args.n_grid, seeds=args.seeds, gamma0=args.gamma0, lambda0=args.lambda0, mode=mode,
        noise_sd=args.noise_sd, n_test=args.n_test, quad_level=args.quad_level, K=args.K, tau=args.tau,
        target_seed=args.seed, erm_radius_factor=args.erm_radius_factor, linked=args.linked, kappa=args.kappa,
        slope_band=band,
    )


def _study_csv(result, timing: bool) -> str:
    rows = [_config_line(result.config.to_dict()), "n,seed,gamma,lambda,mse" + (",wall_ms" if timing else "")]
    for c in sorted(result.cells, key=lambda c: (c.n, c.seed)):
        row = f"{c.n},{c.seed},{_fmt(c.gamma)},{_fmt(c.lam)},{_fmt(c.mse)}"
        rows.append(row + (f",{c.wall_ms:.1f}" if timing else ""))
    return "\n".join(rows) + "\n"


def _write_study(summary: dict, csv_text: str, out: str | None):
    text = json.dumps(summary, indent=1, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(csv_text)
        sys.stderr.write(text)
    else:
        Path(f"{out}.csv").write_text(csv_text, encoding="utf-8")
        Path(f"{out}.summary.json").write_text(text, encoding="utf-8")
        sys.stdout.write(text)


def _study_summary(result) -> dict:
    return {
        "config": result.config.to_dict(),
        "n": result.n_values,
        "mean_mse": result.mean_mse,
        "slope": result.slope,
        "slope_se": result.slope_se,
        "per_seed_slopes": result.per_seed_slopes(),
        "target_l2_sq": result.target_l2_sq,
        "band": list(result.config.slope_band),
        "in_band": result.in_band,
    }


def _progress(cell):
    log.info("n=%d seed=%d mse=%.4g (%.0f ms)", cell.n, cell.seed, cell.mse, cell.wall_ms)


def _calibrated(cfg, args):
    from .experiments import calibrate_lambda0

    if not args.calibrate_lambda0:
        return cfg, None
    best, scores = calibrate_lambda0(cfg)
    log.info("calibrated lambda0=%g", best)
    return replace(cfg, lambda0=best), {"chosen": best, "scores": {repr(k): v for k, v in scores.items()}}


def cmd_rate_study(args) -> int:
    from .experiments import run_rate_study

    threads = _resolve_threads(args)
    cfg, calib = _calibrated(_study_config(args, "ridge"), args)
    result = run_rate_study(cfg, threads=threads, progress=_progress)
    summary = _study_summary(result)
    summary["lambda0_calibration"] = calib
    _write_study(summary, _study_csv(result, args.timing), args.out)
    return EXIT_OK if result.in_band else EXIT_BAND


def cmd_erm_study(args) -> int:
    from .experiments import run_rate_study, shallower_count

    threads = _resolve_threads(args)
    cfg = _study_config(args, "erm")
    result = run_rate_study(cfg, threads=threads, progress=_progress)
    summary = _study_summary(result)
    ok = result.in_band
    if args.compare_ridge:
        ridge_cfg, calib = _calibrated(replace(cfg, mode="ridge", slope_band=(-math.inf, math.inf)), args)
        ridge = run_rate_study(ridge_cfg, threads=threads, progress=_progress)
        count, total = shallower_count(result, ridge)
        summary["ridge_reference"] = {
            "lambda0": ridge_cfg.lambda0,
            "lambda0_calibration": calib,
            "slope": ridge.slope,
            "per_seed_slopes": ridge.per_seed_slopes(),
            "erm_shallower_seeds": count,
            "seeds": total,
            "required": args.min_shallower,
        }
        ok = ok and count >= args.min_shallower
    summary["pass"] = ok
    _write_study(summary, _study_csv(result, args.timing), args.out)
    return EXIT_OK if ok else EXIT_BAND


def cmd_check(args) -> int:
    from .checks import run_check_suite

    _resolve_threads(args)
    report = run_check_suite(seed=args.seed, progress=lambda r: log.info(r.line()))
    lines = [_config_line(_echo(args))]
    lines += [r.line() for r in report]
    failed = sum(not r.passed for r in report)
    lines.append(f"SUMMARY {len(report) - failed}/{len(report)} passed")
    _emit("\n".join(lines) + "\n", args.out)
    if args.out is not None:
        print(lines[-1])
    return EXIT_OK if failed == 0 else EXIT_BAND


def cmd_illposed(args) -> int:
    from .experiments import illposed_demo

    _resolve_threads(args)
    r = illposed_demo(args.d, args.widths, seed=args.seed, n_points=args.n_points)
    lines = [_config_line(_echo(args)), "h,interpolates,max_interp_error,energy,l2_norm_sq,l2_norm"]
    for row in r.rows():
        lines.append(",".join([_fmt(row["h"]), str(row["interpolates"]).lower(), _fmt(row["max_interp_error"]),
                               _fmt(row["energy"]), _fmt(row["l2_norm_sq"]), _fmt(row["l2_norm"])]))
    l2 = r.l2_norm_sq
    exp_ok = abs(r.energy_exponent - (args.d - 2)) <= 1e-6
    ok = exp_ok and all(r.interpolates) and all(b < a for a, b in zip(l2, l2[1:]))
    lines.append(f"# energy_exponent={r.energy_exponent!r} expected={args.d - 2} bump_energy={r.bump_energy!r} "
                 f"pass={str(ok).lower()}")
    _emit("\n".join(lines) + "\n", args.out)
    if args.out is not None:
        print(lines[-1])
    return EXIT_OK if ok else EXIT_BAND


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obstacle-ridge", description="Renormalized Green-kernel ridge regression.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to x1..xd,y CSV data")
    f.add_argument("--data", required=True)
    _schedule_flags(f)
    f.set_defaults(d=None)
    f.add_argument("--mode", choices=("ridge", "erm"), default="ridge")
    f.add_argument("--gamma", type=float, default=None, help="explicit threshold (overrides the schedule)")
    f.add_argument("--lambda", dest="lam", type=float, default=None, help="explicit ridge parameter")
    f.add_argument("--erm-bound", type=float, default=None, help="norm bound M for --mode erm")
    _common_flags(f)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="evaluate a saved model on x1..xd CSV queries")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--smoothed", action="store_true", help="capacitary means instead of point values")
    pr.add_argument("--hex", action="store_true", help="add an exact hex-float column")
    pr.add_argument("--quad-level", type=int, default=3)
    pr.add_argument("--seed", type=int, default=0)
    _common_flags(pr)
    pr.set_defaults(func=cmd_predict)

    for name, func in (("rate-study", cmd_rate_study), ("erm-study", cmd_erm_study)):
        s = sub.add_parser(name, help=f"{name.split('-')[0]} convergence-rate study on synthetic data")
        _schedule_flags(s)
        s.set_defaults(seed=12345)
        s.add_argument("--n-grid", type=_int_list, default=[256, 512, 1024, 2048, 4096])
        s.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
        s.add_argument("--noise-sd", type=float, default=0.5)
        s.add_argument("--n-test", type=int, default=10_000)
        s.add_argument("--K", type=int, default=5, help="number of representers in the target")
        s.add_argument("--tau", type=float, default=1.0, help="target truncation level")
        s.add_argument("--erm-radius-factor", type=float, default=2.0, help="M = factor * target norm")
        s.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), default=None)
        s.add_argument("--calibrate-lambda0", action="store_true",
                       help="choose lambda0 by held-out MSE on separate seeds")
        s.add_argument("--timing", action="store_true", help="add a wall_ms column (not reproducible)")
        if name == "erm-study":
            s.add_argument("--compare-ridge", action="store_true", help="also run the matched ridge study")
            s.add_argument("--min-shallower", type=int, default=4)
        _common_flags(s)
        s.set_defaults(func=func)

    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--seed", type=int, default=0)
    _common_flags(c)
    c.set_defaults(func=cmd_check)

    il = sub.add_parser("illposed", help="vanishing-energy interpolation demo")
    il.add_argument("--d", type=int, default=3)
    il.add_argument("--seed", type=int, default=0)
    il.add_argument("--n-points", type=int, default=10)
    il.add_argument("--widths", type=float, nargs="+", default=None)
    _common_flags(il)
    il.set_defaults(func=cmd_illposed)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, ParamError, ShapeError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ObstacleRidgeError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
