"""Command-line entry point: ``idfunc {estimate,backtest,verify,recover-h,power-study}``.

Exit codes: 0 success, 1 inconsistent pair or unflagged verification
failure, 2 parse/configuration/insufficient data, 3 non-converged or no root,
4 singular moment covariance, 5 singular or degenerate battery.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import calibration, catalog, osband, verifier, zestimate
from .distributions import distribution_from_dict
from .exceptions import (
    DegenerateSimplexError,
    EmptyRootError,
    InconsistentPairError,
    InsufficientDataError,
    NonConvergenceError,
    SingularBatteryError,
    SingularCovarianceError,
    UnsupportedMomentError,
)

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_SINGULAR_COV = 4
EXIT_SINGULAR_BATTERY = 5


class InputError(Exception):
    """Unreadable or malformed input; maps to exit status 2."""


# ----------------------------------------------------------------------
# serialisation


def _num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with every float written to 17 significant digits.

    Non-finite floats become ``null``.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def read_csv(path, ncols=None) -> np.ndarray:
    """Numeric table from a comma-separated file with a header row.

    Raises :class:`InputError` naming the offending line.
    """
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise InputError(f"{path}: {err.strerror}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if _all_numeric(header):
            raise InputError(f"{path}:1: header row required")
        width = len(header)
        if ncols is not None and width != ncols:
            raise InputError(f"{path}:1: expected {ncols} columns, header has {width}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise InputError(f"{path}:{line}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def _all_numeric(row) -> bool:
    try:
        [float(c) for c in row]
        return True
    except ValueError:
        return False


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise InputError(f"{path}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise InputError(f"{path}:{err.lineno}: invalid JSON ({err.msg})") from err
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: top level must be an object")
    return cfg


def _lookup(key):
    try:
        return catalog.identification_function(key)
    except (KeyError, ValueError) as err:
        raise InputError(str(err).strip("'\"")) from err


def _distributions(specs, where):
    try:
        return [distribution_from_dict(s) for s in specs]
    except (KeyError, ValueError, TypeError) as err:
        raise InputError(f"{where}: bad distribution spec ({err})") from err


def _emit(payload, args):
    text = dumps(payload) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------
# commands


def run_estimate(args) -> int:
    V = _lookup(args.functional)
    data = read_csv(args.input)
    if data.shape[1] != V.obs_dim:
        raise InputError(f"{args.input}: {V.key} needs {V.obs_dim} column(s), found {data.shape[1]}")
    obs = data[:, 0] if V.obs_dim == 1 else data
    try:
        est = zestimate.z_estimate(V, obs, method=args.method, tol=args.tol or zestimate.ROOT_TOL)
    except (EmptyRootError, NonConvergenceError) as err:
        _emit({"functional": V.key, "error": str(err), "n": int(len(obs)), "seed": args.seed}, args)
        return EXIT_NONCONVERGED
    except ValueError as err:
        raise InputError(str(err)) from err
    out = {"functional": V.key}
    out.update(est.to_dict())
    out["n"] = int(len(obs))
    out["seed"] = args.seed
    _emit(out, args)
    return EXIT_OK if est.converged else EXIT_NONCONVERGED


def run_backtest(args) -> int:
    V = _lookup(args.functional)
    data = read_csv(args.input, V.action_dim + V.obs_dim)
    x, y = data[:, : V.action_dim], data[:, V.action_dim:]
    h = None
    if args.transform:
        try:
            h = osband.transform_from_key(args.transform, V.k)
        except (KeyError, ValueError) as err:
            raise InputError(str(err)) from err
        if h.k != V.k:
            raise InputError(f"transform {args.transform} is {h.k}x{h.k} but {V.key} has {V.k} components")
    series = calibration.ForecastSeries(x, y)
    try:
        rep = calibration.wald_calibration_test(V, series, args.level, h)
    except InsufficientDataError as err:
        _emit({"functional": V.key, "error": str(err), "status": "insufficient-data"}, args)
        return EXIT_INPUT
    except SingularCovarianceError as err:
        _emit({"functional": V.key, "error": str(err), "status": "singular-covariance"}, args)
        return EXIT_SINGULAR_COV
    out = {"functional": V.key}
    out.update(rep.to_dict())
    out["seed"] = args.seed
    _emit(out, args)
    return EXIT_OK


def run_verify(args) -> int:
    cfg = _load_config(args.config)
    key = args.functional or cfg.get("functional")
    if not key:
        raise InputError("verify needs --functional or a 'functional' entry in the config")
    V = _lookup(key)
    target = cfg.get("target", V.key)
    try:
        T = catalog.functional_for(target)
    except (KeyError, ValueError) as err:
        raise InputError(f"target: {err}") from err
    if T.dim != V.action_dim:
        raise InputError(f"target {target} has dimension {T.dim}, {V.key} acts on {V.action_dim}")
    fam = cfg.get("family", "default")
    family = None if fam == "default" else _distributions(fam, "family")
    grid = cfg.get("grid")
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-6)
    try:
        report = verifier.verify_identification(
            V, T, family, x_grid=grid, tol=tol, margin=cfg.get("margin", 1e-4),
            exclusion=cfg.get("exclusion", 0.1), offsets=cfg.get("offsets"),
        )
    except UnsupportedMomentError as err:
        raise InputError(f"family: {err}") from err
    out = report.to_dict()
    out["seed"] = args.seed
    _emit(out, args)
    return EXIT_OK if report.ok else EXIT_INCONSISTENT


def _default_grid(V):
    if V.domain.constraint == "halfspace":
        axes = [np.linspace(-2.0, -1.0, 5), np.linspace(-3.5, -2.5, 5)]
    elif V.domain.constraint == "product":
        axes = [np.linspace(-1.0, 1.0, 5), np.linspace(0.5, 2.5, 5)]
    else:
        axes = [np.linspace(-1.0, 1.0, 5)] * V.action_dim
    return [list(p) for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(V.action_dim, -1).T]


def _grid_from_config(cfg, V):
    g = cfg.get("grid")
    if g is None:
        return _default_grid(V)
    if isinstance(g, dict):
        axes = [np.asarray(a, dtype=float) for a in g["axes"]]
        return [list(p) for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T]
    return g


def run_recover_h(args) -> int:
    cfg = _load_config(args.config)
    key = args.functional or cfg.get("functional")
    key2 = args.prime or cfg.get("prime")
    if not key or not key2:
        raise InputError("recover-h needs two catalog keys (--functional and --prime)")
    V, Vp = _lookup(key), _lookup(key2)
    if V.k != Vp.k or V.action_dim != Vp.action_dim:
        raise InputError(f"{V.key} and {Vp.key} differ in dimension")
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-6)
    battery = cfg.get("battery")
    battery = None if battery is None else _distributions(battery, "battery")
    results, status, worst = [], EXIT_OK, 0.0
    for x in _grid_from_config(cfg, V):
        try:
            bat = battery if battery is not None else osband.find_v1_battery(V, x)
            r = osband.recover_h(V, Vp, x, bat, tol=tol)
            entry = dict(r.to_dict(), status="ok")
        except UnsupportedMomentError as err:
            raise InputError(f"battery: {err}") from err
        except InconsistentPairError as err:
            entry = dict(err.result.to_dict(), status="inconsistent-pair")
            status = EXIT_INCONSISTENT
        except (SingularBatteryError, DegenerateSimplexError) as err:
            _emit({"functional": V.key, "prime": Vp.key, "x": [float(v) for v in x],
                   "error": str(err), "status": "singular-battery"}, args)
            return EXIT_SINGULAR_BATTERY
        if entry["heldout_residual"] is not None:
            worst = max(worst, entry["heldout_residual"])
        results.append(entry)
    dets = [e["determinant"] for e in results]
    out = {
        "functional": V.key,
        "prime": Vp.key,
        "tol": tol,
        "ok": status == EXIT_OK,
        "max_heldout_residual": worst,
        "determinant_sign_constant": len({np.sign(d) for d in dets}) == 1 and 0.0 not in dets,
        "results": results,
        "seed": args.seed,
    }
    _emit(out, args)
    return status


def run_power_study(args) -> int:
    cfg = _load_config(args.config)
    try:
        V = _lookup(cfg["functional"])
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise InputError("power-study is stochastic: give --seed or a 'seed' entry")
        hs = [None if k == "identity" else osband.transform_from_key(k, V.k) for k in cfg.get("transforms", ["identity"])]
        scenario = calibration.Scenario.from_dict(cfg.get("scenario", {}))
        n = int(cfg.get("n", 500))
        reps = int(cfg.get("replications", 2000))
        level = float(cfg.get("level", 0.05))
    except KeyError as err:
        raise InputError(f"config: missing or unknown entry {err}") from err
    except (TypeError, ValueError) as err:
        raise InputError(f"config: {err}") from err
    if any(h is not None and h.k != V.k for h in hs):
        raise InputError("a transform does not match the number of moment conditions")
    table = calibration.size_power_study(V, hs, scenario, n, reps, level, seed)
    text = table.csv()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (recorded in the output)")
    common.add_argument("--tol", type=float, default=None, help="numerical tolerance override")
    common.add_argument("--output", default=None, help="write to this path instead of standard output")

    p = argparse.ArgumentParser(prog="idfunc", description="Identification functions: estimation, backtests, checks.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="Z-estimate a functional from a sample")
    e.add_argument("--functional", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--method", choices=["auto", "sequential", "general"], default="auto")
    e.set_defaults(run=run_estimate)

    b = sub.add_parser("backtest", parents=[common], help="Wald calibration test of a forecast series")
    b.add_argument("--functional", required=True)
    b.add_argument("--input", required=True)
    b.add_argument("--transform", default=None)
    b.add_argument("--level", type=float, default=0.05)
    b.set_defaults(run=run_backtest)

    v = sub.add_parser("verify", parents=[common], help="numerical identification checks")
    v.add_argument("--functional", default=None)
    v.add_argument("--config", default=None)
    v.set_defaults(run=run_verify)

    r = sub.add_parser("recover-h", parents=[common], help="recover the matrix linking two identification functions")
    r.add_argument("--functional", default=None)
    r.add_argument("--prime", default=None)
    r.add_argument("--config", default=None)
    r.set_defaults(run=run_recover_h)

    s = sub.add_parser("power-study", parents=[common], help="Monte Carlo size/power table")
    s.add_argument("--config", required=True)
    s.set_defaults(run=run_power_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.run(args)
    except InputError as err:
        print(f"idfunc {args.command}: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
