"""Scenario files: a declarative TOML schema describing a switched system,
one run of it, integrator tolerances, and output destination.
"""

from __future__ import annotations

import math
import sys as _sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expr import eval_expr, parse_expr
from .model import SwitchedSystem
from .stepping import IntegratorOptions


class SchemaError(ValueError):
    """A scenario file violated the schema; message carries the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


METHODS = ("hysteresis", "smoothing", "embedding", "filippov", "utkin")


@dataclass
class RunConfig:
    method: str
    T: float
    x0: list
    alpha: Optional[float] = None
    epsilon: Optional[float] = None
    kappa: Optional[float] = None
    delta0: Optional[float] = None
    y0: float = 0.0
    u0: Optional[float] = None
    mode0: Optional[int] = None


@dataclass
class Scenario:
    system: SwitchedSystem
    f_texts: list
    g_text: str
    run: Optional[RunConfig]
    integrator: IntegratorOptions
    out_path: Optional[str]
    out_format: str
    extras: dict = field(default_factory=dict)  # converge/isochrone/qcurve/region


def _need(table: dict, key: str, path: str):
    if key not in table:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return table[key]


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def build_system(f_texts, g_text, k: int, M: float) -> SwitchedSystem:
    """Compile expression strings into a SwitchedSystem.

    For k = 1 both 'x' and 'x1' are accepted as the state variable.
    """
    names = [f"x{i + 1}" for i in range(k)] + ["y", "u"]
    if k == 1:
        names.append("x")
    try:
        f_trees = [parse_expr(t, names) for t in f_texts]
        g_tree = parse_expr(g_text, names)
    except ValueError as exc:
        raise SchemaError("system", str(exc)) from exc

    def bindings(x, y, u):
        b = {f"x{i + 1}": x[i] for i in range(k)}
        if k == 1:
            b["x"] = x[0]
        b["y"] = y
        b["u"] = u
        return b

    def f(x, y, u):
        b = bindings(x, y, u)
        return np.array([eval_expr(t, b) for t in f_trees])

    def g(x, y, u):
        return eval_expr(g_tree, bindings(x, y, u))

    return SwitchedSystem(f=f, g=g, k=k, M=M)


def load_scenario(path: str) -> Scenario:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError("<file>", f"invalid TOML: {exc}") from exc

    system_tbl = _need(doc, "system", "")
    f_texts = _need(system_tbl, "f", "system")
    if not isinstance(f_texts, list) or not all(isinstance(t, str) for t in f_texts):
        raise SchemaError("system.f", "expected a list of expression strings")
    g_text = _need(system_tbl, "g", "system")
    if not isinstance(g_text, str):
        raise SchemaError("system.g", "expected an expression string")
    k = system_tbl.get("k", len(f_texts))
    if not isinstance(k, int) or k < 1:
        raise SchemaError("system.k", "expected an integer >= 1")
    if k != len(f_texts):
        raise SchemaError("system.f", f"expected {k} components, got {len(f_texts)}")
    M = _number(system_tbl.get("M", 1.0), "system.M")
    if M <= 0:
        raise SchemaError("system.M", "must be positive")
    system = build_system(f_texts, g_text, k, M)

    run_cfg = None
    if "run" in doc:
        run_tbl = doc["run"]
        method = _need(run_tbl, "method", "run")
        if method not in METHODS:
            raise SchemaError("run.method", f"must be one of {METHODS}")
        T = _number(_need(run_tbl, "T", "run"), "run.T")
        if T <= 0:
            raise SchemaError("run.T", "must be positive")
        x0 = run_tbl.get("x0", [0.0] * k)
        if isinstance(x0, (int, float)):
            x0 = [float(x0)]
        if len(x0) != k:
            raise SchemaError("run.x0", f"expected {k} components")
        run_cfg = RunConfig(
            method=method, T=T, x0=[_number(v, "run.x0") for v in x0],
            alpha=(_number(run_tbl["alpha"], "run.alpha")
                   if "alpha" in run_tbl else None),
            epsilon=(_number(run_tbl["epsilon"], "run.epsilon")
                     if "epsilon" in run_tbl else None),
            kappa=(_number(run_tbl["kappa"], "run.kappa")
                   if "kappa" in run_tbl else None),
            delta0=(_number(run_tbl["delta0"], "run.delta0")
                    if "delta0" in run_tbl else None),
            y0=_number(run_tbl.get("y0", 0.0), "run.y0"),
            u0=(_number(run_tbl["u0"], "run.u0") if "u0" in run_tbl else None),
            mode0=run_tbl.get("mode0"),
        )
        if run_cfg.mode0 is not None and run_cfg.mode0 not in (-1, 1):
            raise SchemaError("run.mode0", "must be -1 or +1")
        if method in ("hysteresis", "smoothing", "embedding"):
            if run_cfg.alpha is None:
                raise SchemaError("run.alpha", f"required for method {method!r}")
            if method != "embedding" and run_cfg.alpha <= 0:
                raise SchemaError("run.alpha", "must be positive")
        if method == "embedding":
            if run_cfg.epsilon is None and run_cfg.kappa is None:
                raise SchemaError("run.epsilon",
                                  "embedding needs epsilon or kappa")
            if run_cfg.epsilon is None:
                run_cfg.epsilon = abs(run_cfg.kappa * run_cfg.alpha)
            if run_cfg.epsilon <= 0:
                raise SchemaError("run.epsilon", "must be positive")

    integ_tbl = doc.get("integrator", {})
    known = {"rtol", "atol", "event_tol", "h_init", "h_min", "h_max", "max_steps"}
    for key in integ_tbl:
        if key not in known:
            raise SchemaError(f"integrator.{key}", "unknown field")
    kwargs = {}
    for key in known - {"max_steps"}:
        if key in integ_tbl:
            kwargs[key] = _number(integ_tbl[key], f"integrator.{key}")
    if "max_steps" in integ_tbl:
        kwargs["max_steps"] = int(integ_tbl["max_steps"])
    try:
        integrator = IntegratorOptions(**kwargs)
    except ValueError as exc:
        raise SchemaError("integrator", str(exc)) from exc

    out_tbl = doc.get("output", {})
    out_format = out_tbl.get("format", "csv")
    if out_format not in ("csv", "json"):
        raise SchemaError("output.format", "must be 'csv' or 'json'")
    out_path = out_tbl.get("path")

    extras = {name: doc[name] for name in
              ("converge", "isochrone", "qcurve", "region") if name in doc}
    return Scenario(system, list(f_texts), g_text, run_cfg, integrator,
                    out_path, out_format, extras)
