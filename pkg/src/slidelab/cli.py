"""Command-line driver: scenario execution, comparison, convergence studies,
isochrone/slow-curve extraction and invariant-region checks.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 completed
with flags (e.g. region violations or a flagged early stop).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile

import numpy as np

from .analysis import (annulus_region, block_region, convergence_study,
                       isochrone, region_check, slow_curve_Q)
from .model import DomainError, EvaluationError
from .regularize import run_embedded, run_hysteresis, run_smoothed
from .resolvers import (filippov_field, filippov_lambda, slide, utkin_control,
                        utkin_field)
from .scenario import Scenario, SchemaError, load_scenario
from .stepping import IntegrationError


class _Flagged(Exception):
    """Completed, but with conditions the caller should know about."""


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_num(v) -> str:
    return repr(float(v))


def _traj_json(traj) -> dict:
    return {
        "times": [float(t) for t in traj.times],
        "states": [[float(v) for v in s] for s in traj.states],
        "events": [[float(t), kind] for t, kind in traj.events],
        "flags": list(traj.flags),
    }


def _traj_csv(traj, k: int, method: str, mode0=None) -> str:
    has_u = traj.dim == k + 2
    has_y = traj.dim >= k + 1
    cols = ["t"] + [f"x{i + 1}" for i in range(k)]
    if has_y:
        cols.append("y")
    if has_u:
        cols.append("u")
    cols += ["mode", "event"]

    events = sorted(traj.events)
    switch = {t: kind for t, kind in events if kind.startswith("switch")}
    out = []
    writer_rows = [cols]
    mode = mode0
    for t, s in zip(traj.times, traj.states):
        row = [_fmt_num(t)] + [_fmt_num(v) for v in s[:k]]
        if has_y:
            row.append(_fmt_num(s[k]))
        if has_u:
            row.append(_fmt_num(s[k + 1]))
        if method in ("filippov", "utkin"):
            mode_val = method
        elif method == "hysteresis":
            for te, kind in switch.items():
                if te <= t + 1e-12:
                    mode = 1 if kind == "switch-up" else -1
            mode_val = str(mode)
        elif method == "embedding":
            mode_val = "1" if s[k + 1] > 0 else "-1"
        else:
            mode_val = "0"
        ev = ""
        for te, kind in events:
            if abs(te - t) <= 1e-12:
                ev = kind
        writer_rows.append(row + [mode_val, ev])

    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(writer_rows)
    return buf.getvalue()


def _write(path, fmt, payload, traj_info=None):
    if fmt == "json":
        _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        if traj_info is None:
            raise DomainError("csv output is only available for trajectories")
        _atomic_write(path, traj_info)


def _cmd_run(sc: Scenario, args) -> None:
    if sc.run is None:
        raise SchemaError("run", "missing [run] block")
    cfg, system, opts = sc.run, sc.system, sc.integrator
    if args.alpha is not None:
        cfg.alpha = args.alpha
        if cfg.method == "embedding" and cfg.kappa is not None and args.epsilon is None:
            cfg.epsilon = abs(cfg.kappa * cfg.alpha)
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.T is not None:
        cfg.T = args.T

    method = cfg.method
    if method in ("filippov", "utkin"):
        traj = slide(system, method, cfg.x0, cfg.T, opts)
        run_flags = list(traj.flags)
    elif method == "hysteresis":
        mode0 = cfg.mode0
        if mode0 is None:
            mode0 = int(math.copysign(1, cfg.u0)) if cfg.u0 is not None else 1
        run = run_hysteresis(system, cfg.x0, cfg.y0, mode0, cfg.alpha, cfg.T, opts)
        traj, run_flags = run.trajectory, list(run.flags)
    elif method == "smoothing":
        run = run_smoothed(system, cfg.x0, cfg.y0, cfg.alpha, None, cfg.T, opts)
        traj, run_flags = run.trajectory, list(run.flags)
    else:
        u0 = cfg.u0 if cfg.u0 is not None else 1.0
        run = run_embedded(system, cfg.x0, cfg.y0, u0, cfg.alpha, cfg.epsilon,
                           cfg.T, opts, delta0=cfg.delta0)
        traj, run_flags = run.trajectory, list(run.flags)

    out = args.out or sc.out_path
    if out is None:
        raise SchemaError("output.path", "no output path given")
    fmt = args.format or sc.out_format
    payload = {"params": {"method": method, "alpha": cfg.alpha,
                          "epsilon": cfg.epsilon, "T": cfg.T},
               "trajectory": _traj_json(traj)}
    _write(out, fmt, payload,
           _traj_csv(traj, system.k, method, cfg.mode0 or -1))
    if run_flags:
        raise _Flagged(", ".join(run_flags))


def _cmd_compare(sc: Scenario, args) -> None:
    system, opts = sc.system, sc.integrator
    x0 = sc.run.x0 if sc.run else [0.0] * system.k
    T = args.T if args.T is not None else (sc.run.T if sc.run else 1.0)
    x0v = np.asarray(x0, dtype=float)
    fil = slide(system, "filippov", x0v, T, opts)
    utk = slide(system, "utkin", x0v, T, opts)
    payload = {
        "x0": [float(v) for v in x0v],
        "T": T,
        "filippov": {
            "rate": [float(v) for v in filippov_field(system, x0v)],
            "lambda": filippov_lambda(system, x0v),
            "trajectory": _traj_json(fil),
        },
        "utkin": {
            "rate": [float(v) for v in utkin_field(system, x0v)],
            "control": utkin_control(system, x0v),
            "trajectory": _traj_json(utk),
        },
    }
    out = args.out or sc.out_path
    if out is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        _write(out, "json", payload)


def _cmd_converge(sc: Scenario, args) -> None:
    tbl = sc.extras.get("converge")
    if tbl is None:
        raise SchemaError("converge", "missing [converge] block")
    method = tbl.get("method", "hysteresis")
    alphas = tbl.get("alphas")
    if not isinstance(alphas, list) or len(alphas) < 4:
        raise SchemaError("converge.alphas", "need a list of >= 4 alphas")
    T = float(tbl.get("T", args.T if args.T is not None else 1.0))
    x0 = tbl.get("x0", [0.0] * sc.system.k)
    kappa = float(tbl.get("kappa", 0.1))
    report = convergence_study(sc.system, method, x0, T, alphas, sc.integrator,
                               kappa=kappa)
    payload = {
        "method": report.method,
        "alphas": list(report.alphas),
        "errors": list(report.errors),
        "fitted_order": report.fitted_order,
        "fitted_constant": report.fitted_constant,
        "correction": report.correction,
        "r_squared": report.r_squared,
        "flags": list(report.flags),
    }
    out = args.out or sc.out_path
    if out is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        _write(out, "json", payload)
    if report.flags:
        raise _Flagged("; ".join(report.flags))


def _cmd_isochrone(sc: Scenario, args) -> None:
    tbl = sc.extras.get("isochrone")
    if tbl is None:
        raise SchemaError("isochrone", "missing [isochrone] block")
    alpha = args.alpha if args.alpha is not None else tbl.get("alpha")
    if alpha is None:
        raise SchemaError("isochrone.alpha", "missing required field")
    x_grid = tbl.get("x_grid")
    if not isinstance(x_grid, list) or not x_grid:
        raise SchemaError("isochrone.x_grid", "need a non-empty list")
    tol = float(tbl.get("tol", 1e-9))
    pts = isochrone(sc.system, float(alpha), x_grid, tol, sc.integrator)
    rows = [["x", "y_p", "residual", "ok"]]
    for p in pts:
        rows.append([_fmt_num(p.x[0]), _fmt_num(p.y_p), _fmt_num(p.residual),
                     str(p.ok)])
    import io
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    out = args.out or sc.out_path
    if out is None:
        print(buf.getvalue(), end="")
    else:
        _atomic_write(out, buf.getvalue())
    if not all(p.ok for p in pts):
        raise _Flagged("bisection failed at one or more grid points")


def _cmd_qcurve(sc: Scenario, args) -> None:
    tbl = sc.extras.get("qcurve")
    if tbl is None:
        raise SchemaError("qcurve", "missing [qcurve] block")
    alpha = args.alpha if args.alpha is not None else tbl.get("alpha")
    eps = args.epsilon if args.epsilon is not None else tbl.get("epsilon")
    if alpha is None or eps is None:
        raise SchemaError("qcurve", "alpha and epsilon are required")
    x_grid = tbl.get("x_grid")
    if not isinstance(x_grid, list) or not x_grid:
        raise SchemaError("qcurve.x_grid", "need a non-empty list")
    pts = slow_curve_Q(sc.system, float(alpha), float(eps), x_grid)
    rows = [["x", "u", "y", "ok"]]
    for p in pts:
        rows.append([_fmt_num(p.x[0]), _fmt_num(p.u), _fmt_num(p.y), str(p.ok)])
    import io
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    out = args.out or sc.out_path
    if out is None:
        print(buf.getvalue(), end="")
    else:
        _atomic_write(out, buf.getvalue())
    if not all(p.ok for p in pts):
        raise _Flagged("some grid points fall outside the middle branch")


def _cmd_region(sc: Scenario, args) -> None:
    tbl = sc.extras.get("region")
    if tbl is None:
        raise SchemaError("region", "missing [region] block")
    kind = tbl.get("kind")
    alpha = args.alpha if args.alpha is not None else tbl.get("alpha")
    if alpha is None:
        raise SchemaError("region.alpha", "missing required field")
    n = int(tbl.get("samples", 100))
    if kind == "annulus":
        spec = annulus_region(sc.system, float(alpha),
                              float(tbl.get("kappa", 0.1)),
                              float(tbl.get("delta0", 1e-3)))
    elif kind == "block":
        spec = block_region(sc.system, float(alpha),
                            float(tbl.get("kappa", -0.05)),
                            float(tbl.get("delta", 0.05)))
    else:
        raise SchemaError("region.kind", "must be 'annulus' or 'block'")
    violations = region_check(sc.system, spec, n)
    payload = {
        "kind": spec.kind,
        "params": {key: float(v) for key, v in spec.params.items()},
        "samples_per_face": n,
        "violations": [{"face": v.face, "point": [float(c) for c in v.point],
                        "rate": float(v.rate)} for v in violations],
    }
    out = args.out or sc.out_path
    if out is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        _write(out, "json", payload)
    if violations:
        raise _Flagged(f"{len(violations)} inward-flow violations")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slidelab",
        description="Numerical laboratory for planar relay-switched systems")
    ap.add_argument("--scenario", required=True, help="scenario TOML file")
    ap.add_argument("--out", help="output path (overrides the scenario)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--seed", type=int, help="reserved")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker hint (runs are deterministic regardless)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "converge", "isochrone", "qcurve",
                 "region-check"):
        sp = sub.add_parser(name)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--T", type=float)
    return ap


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "converge": _cmd_converge,
    "isochrone": _cmd_isochrone,
    "qcurve": _cmd_qcurve,
    "region-check": _cmd_region,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        _COMMANDS[args.command](sc, args)
    except (SchemaError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, EvaluationError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except _Flagged as exc:
        print(f"completed with flags: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
