"""Sliding-mode reductions on y=0: convex combination and equivalent control."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import DomainError, SwitchedSystem, Trajectory, as_state_vector
from .stepping import IntegratorOptions, _drive


class DegenerateCrossingError(ValueError):
    """The two one-sided normal rates coincide; no unique convex combination."""


def filippov_lambda(sys: SwitchedSystem, x) -> float:
    """Convex weight lambda = g-/(g- - g+) at (x, 0).

    With the attracting-sliding sign conditions g+ < 0 < g-, lambda lies in
    (0, 1) and lambda*g+ + (1-lambda)*g- = 0.
    """
    xv = as_state_vector(x, sys.k)
    gp = sys.g_plus(xv, 0.0)
    gm = sys.g_minus(xv, 0.0)
    if abs(gm - gp) < 1e-14:
        raise DegenerateCrossingError(f"g- = g+ = {gm} at x={xv}")
    return gm / (gm - gp)


def filippov_field(sys: SwitchedSystem, x) -> np.ndarray:
    """Sliding rate (f+ g- - f- g+)/(g- - g+) at (x, 0)."""
    xv = as_state_vector(x, sys.k)
    gp = sys.g_plus(xv, 0.0)
    gm = sys.g_minus(xv, 0.0)
    if abs(gm - gp) < 1e-14:
        raise DegenerateCrossingError(f"g- = g+ = {gm} at x={xv}")
    fp = sys.f_plus(xv, 0.0)
    fm = sys.f_minus(xv, 0.0)
    return (fp * gm - fm * gp) / (gm - gp)


def utkin_control(sys: SwitchedSystem, x) -> float:
    """The root u in [-1, 1] of g(x, 0, u), found by bisection.

    The transversality conditions guarantee a bracket (g is negative at
    u=+1, positive at u=-1, strictly decreasing in u).
    """
    xv = as_state_vector(x, sys.k)
    g = lambda u: float(sys.g(xv, 0.0, u))
    g_lo, g_hi = g(-1.0), g(+1.0)
    if g_lo == 0.0:
        return -1.0
    if g_hi == 0.0:
        return 1.0
    if g_lo * g_hi > 0:
        raise DomainError(
            f"no sign change of g(x,0,u) on [-1,1] at x={xv}: "
            f"g(-1)={g_lo}, g(+1)={g_hi}")
    lo, hi = -1.0, 1.0  # g(lo) > 0 > g(hi) under transversality
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= 1e-12:
            return mid
        if (gm > 0) == (g_lo > 0):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


def _utkin_control_extended(sys: SwitchedSystem, x) -> float:
    """utkin_control, continued past the loss of the bracket.

    Adaptive stepping near a sliding exit evaluates trial stages slightly
    beyond the point where the root leaves [-1, 1]; there the chord root of
    g(x,0,u) through u = -1, +1 extends the control smoothly (and pushes
    the exit margin 1 - |u| negative, so the exit event can be localized).
    """
    xv = as_state_vector(x, sys.k)
    g_lo = float(sys.g(xv, 0.0, -1.0))
    g_hi = float(sys.g(xv, 0.0, +1.0))
    if g_lo * g_hi > 0 and abs(g_lo - g_hi) > 1e-14:
        return -1.0 + 2.0 * g_lo / (g_lo - g_hi)
    return utkin_control(sys, xv)


def utkin_field(sys: SwitchedSystem, x) -> np.ndarray:
    """Equivalent-control sliding rate f(x, 0, U(x))."""
    xv = as_state_vector(x, sys.k)
    u = utkin_control(sys, xv)
    return np.atleast_1d(np.asarray(sys.f(xv, 0.0, u), dtype=float))


@dataclass(frozen=True)
class SlidingField:
    """A k-dimensional sliding reduction with its auxiliary quantity."""

    kind: str  # 'filippov' | 'utkin'
    rate: Callable[[np.ndarray], np.ndarray]
    auxiliary: Callable[[np.ndarray], float]  # lambda(x) in [0,1] or U(x) in [-1,1]


def sliding_field(sys: SwitchedSystem, kind: str) -> SlidingField:
    if kind == "filippov":
        return SlidingField(kind, lambda x: filippov_field(sys, x),
                            lambda x: filippov_lambda(sys, x))
    if kind == "utkin":
        return SlidingField(kind, lambda x: utkin_field(sys, x),
                            lambda x: utkin_control(sys, x))
    raise DomainError(f"unknown sliding kind {kind!r}")


def slide(sys: SwitchedSystem, kind: str, x0, T: float,
          opts: IntegratorOptions = IntegratorOptions()) -> Trajectory:
    """Integrate the chosen sliding reduction from x0 for time T.

    Stops early (and flags the trajectory) if |x|_inf reaches M or the
    auxiliary quantity leaves its admissible interval (sliding exit).
    """
    fld = sliding_field(sys, kind)
    if kind == "utkin":
        # Use the chord-extended control so trial stages just past a sliding
        # exit stay evaluable while the event is being localized.
        fld = SlidingField(
            kind,
            lambda x: np.atleast_1d(np.asarray(
                sys.f(as_state_vector(x, sys.k), 0.0,
                      _utkin_control_extended(sys, x)), dtype=float)),
            lambda x: _utkin_control_extended(sys, x))
    x0v = as_state_vector(x0, sys.k)
    if np.max(np.abs(x0v)) >= sys.M:
        raise DomainError(f"|x0|_inf = {np.max(np.abs(x0v))} >= M = {sys.M}")

    if kind == "filippov":
        def aux_margin(x):
            lam = fld.auxiliary(x)
            return min(lam, 1.0 - lam)
    else:
        def aux_margin(x):
            u = fld.auxiliary(x)
            return 1.0 - abs(u)

    def margin(t, x):
        return min(sys.M - float(np.max(np.abs(x))), aux_margin(x))

    traj = Trajectory(sys.k)
    hit, t_ev, x_ev = _drive(lambda t, x: fld.rate(x), 0.0, x0v, T, opts, traj,
                             event=margin, direction=None)
    if hit:
        if sys.M - float(np.max(np.abs(x_ev))) <= aux_margin(x_ev):
            traj.flags.append("domain-exit")
        else:
            traj.flags.append("sliding-exit")
        traj.add_event(t_ev, "surface-hit")
    return traj
