"""Time stepping: fixed RK4, adaptive Dormand-Prince 4(5), event localization.

Dense output is cubic Hermite per accepted step, which is what Trajectory
stores natively; event times are refined by bisection on the interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import DomainError, Trajectory


class IntegrationError(RuntimeError):
    """Integration failed (non-finite state or internal limit)."""


class StiffnessError(IntegrationError):
    """Step size underflowed h_min with a failing error estimate."""

    def __init__(self, t: float, state: np.ndarray):
        super().__init__(f"step size underflow at t={t}")
        self.t = t
        self.state = np.asarray(state)


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: Optional[float] = None
    h_min: float = 1e-13
    h_max: float = math.inf
    event_tol: float = 1e-12
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_max):
            raise DomainError("need 0 < h_min <= h_max")
        if self.rtol <= 0 or self.atol <= 0 or self.event_tol <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_steps <= 0:
            raise DomainError("max_steps must be positive")


def rk4_fixed(field, t0: float, s0, h: float, n_steps: int) -> Trajectory:
    """Classical RK4 with ``n_steps`` steps of size ``h``."""
    if h <= 0:
        raise DomainError("step size must be positive")
    s = np.atleast_1d(np.asarray(s0, dtype=float))
    traj = Trajectory(s.size)
    t = float(t0)
    d = np.asarray(field(t, s), dtype=float)
    traj.add_node(t, s, d)
    for i in range(n_steps):
        k1 = d
        k2 = np.asarray(field(t + h / 2, s + h / 2 * k1), dtype=float)
        k3 = np.asarray(field(t + h / 2, s + h / 2 * k2), dtype=float)
        k4 = np.asarray(field(t + h, s + h * k3), dtype=float)
        s = s + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)):
            raise IntegrationError(f"non-finite state at step {i + 1}, t={t + h}")
        t = t0 + (i + 1) * h
        d = np.asarray(field(t, s), dtype=float)
        traj.add_node(t, s, d)
    return traj


# Dormand-Prince 5(4) coefficients (FSAL: last stage equals next k1).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _initial_step(field, t0, s0, d0, rtol, atol, direction=1.0):
    # Hairer-Norsett-Wanner starting-step heuristic.
    scale = atol + rtol * np.abs(s0)
    d0n = np.max(np.abs(s0) / scale)
    d1n = np.max(np.abs(d0) / scale)
    if d0n < 1e-5 or d1n < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0n / d1n
    s1 = s0 + direction * h0 * d0
    d1 = np.asarray(field(t0 + direction * h0, s1), dtype=float)
    d2n = np.max(np.abs(d1 - d0) / scale) / h0
    if max(d1n, d2n) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1n, d2n)) ** 0.2
    return min(100 * h0, h1)


def _drive(field, t0: float, s0: np.ndarray, t_end: float, opts: IntegratorOptions,
           traj: Trajectory, event: Optional[Callable] = None,
           direction: Optional[float] = None, zero_tol: float = 1e-12):
    """Adaptive DP45 loop from t0 to t_end, optionally stopping at an event.

    Appends nodes to ``traj``; returns (hit, t_event, s_event) with hit=False
    and the final node when no event fires.  ``direction`` is the required
    departure sign of the event function when event(t0, s0) is within
    ``zero_tol`` of zero (callers continuing from a localized event may need
    a looser zero_tol, since localization is in time, not event value).
    """
    t = float(t0)
    s = np.asarray(s0, dtype=float)
    d = np.asarray(field(t, s), dtype=float)
    traj.add_node(t, s, d)

    armed_sign = 0.0
    if event is not None:
        e0 = float(event(t, s))
        # Values inside zero_tol count as "on the surface": arming on their
        # sign would trip on localization noise.
        if abs(e0) > zero_tol:
            armed_sign = math.copysign(1.0, e0)
        elif direction is None:
            raise DomainError("event is zero at start; a departure direction is required")
        # else: arm once the event value leaves zero in the given direction.

    span = t_end - t
    if span <= 0:
        return False, t, s
    h = opts.h_init if opts.h_init is not None else _initial_step(
        field, t, s, d, opts.rtol, opts.atol)
    h = min(h, opts.h_max, span)

    err_prev = 1.0
    for _ in range(opts.max_steps):
        if t >= t_end:
            return False, t, s
        h = min(h, t_end - t)
        h = max(h, opts.h_min)

        k = [d]
        for i in range(1, 7):
            si = s + h * sum(a * kk for a, kk in zip(_DP_A[i], k))
            k.append(np.asarray(field(t + _DP_C[i] * h, si), dtype=float))
        s_new = s + h * sum(b * kk for b, kk in zip(_DP_B5, k))
        err_vec = h * sum(e * kk for e, kk in zip(_DP_E, k))
        scale = opts.atol + opts.rtol * np.maximum(np.abs(s), np.abs(s_new))
        err = float(np.max(np.abs(err_vec) / scale))
        finite = np.all(np.isfinite(s_new))

        if finite and err <= 1.0:
            d_new = k[6]  # FSAL
            t_new = t + h
            # PI step-size controller.
            fac = 0.9 * (max(err, 1e-16) ** -0.14) * (max(err_prev, 1e-16) ** 0.08)
            err_prev = max(err, 1e-16)
            h_next = min(h * min(5.0, fac), opts.h_max)

            if event is not None:
                e_new = float(event(t_new, s_new))
                fired = False
                if armed_sign != 0.0:
                    fired = e_new == 0.0 or math.copysign(1.0, e_new) != armed_sign
                else:
                    # Departure phase: arm only once we move clearly off zero.
                    if abs(e_new) > zero_tol:
                        if math.copysign(1.0, e_new) == direction:
                            armed_sign = direction
                        else:
                            fired = True  # left zero against the declared direction
                if fired:
                    t_ev, s_ev = _refine_event(
                        event, t, s, d, t_new, s_new, d_new, opts)
                    # Truncate the trajectory at the event so callers can
                    # continue integrating (with new dynamics) from t_ev.
                    d_ev = np.asarray(field(t_ev, s_ev), dtype=float)
                    traj.add_node(t_ev, s_ev, d_ev)
                    return True, t_ev, s_ev

            traj.add_node(t_new, s_new, d_new)
            t, s, d = t_new, s_new, d_new
            h = h_next
        else:
            if h <= opts.h_min * (1 + 1e-9):
                raise StiffnessError(t, s)
            shrink = 0.9 * (max(err, 1e-16) ** -0.2) if finite else 0.1
            h = max(h * max(0.1, min(0.9, shrink)), opts.h_min)
    raise IntegrationError(f"max_steps={opts.max_steps} exceeded at t={t}")


def _refine_event(event, t_lo, s_lo, d_lo, t_hi, s_hi, d_hi, opts):
    """Bisect on the Hermite interpolant of the bracketing step."""
    from .model import _hermite

    e_lo = float(event(t_lo, s_lo))
    lo, hi = t_lo, t_hi

    def interp(t):
        return _hermite(t_lo, t_hi, s_lo, s_hi, d_lo, d_hi, t)

    for _ in range(200):
        if hi - lo <= opts.event_tol:
            break
        mid = 0.5 * (lo + hi)
        s_mid = interp(mid)
        e_mid = float(event(mid, s_mid))
        if abs(e_mid) <= 1e-12:
            lo = hi = mid
            break
        if e_lo != 0.0 and math.copysign(1.0, e_mid) == math.copysign(1.0, e_lo):
            lo = mid
        else:
            hi = mid
    t_ev = 0.5 * (lo + hi)
    return t_ev, interp(t_ev)


def integrate_adaptive(field, t0: float, s0, T: float,
                       opts: IntegratorOptions = IntegratorOptions()) -> Trajectory:
    """Adaptive integration from t0 to T (T >= t0)."""
    if T < t0:
        raise DomainError("need T >= t0")
    s = np.atleast_1d(np.asarray(s0, dtype=float))
    traj = Trajectory(s.size)
    if T == t0:
        traj.add_node(t0, s, np.asarray(field(t0, s), dtype=float))
        return traj
    _drive(field, t0, s, T, opts, traj)
    return traj


@dataclass(frozen=True)
class EventOutcome:
    hit: bool
    t: float
    state: np.ndarray
    trajectory: Trajectory


def integrate_to_event(field, t0: float, s0, event: Callable, T_max: float,
                       opts: IntegratorOptions = IntegratorOptions(),
                       direction: Optional[float] = None) -> EventOutcome:
    """Integrate until the first sign change of ``event(s)`` or T_max.

    ``event`` takes the state vector.  A no-event outcome (hit=False) is a
    distinguished result, not an error.  If event(s0)=0 a departure
    ``direction`` (the sign the event takes as the flow leaves) is required.
    """
    s = np.atleast_1d(np.asarray(s0, dtype=float))
    traj = Trajectory(s.size)
    ev = lambda t, st: event(st)
    hit, t_ev, s_ev = _drive(field, t0, s, T_max, opts, traj, event=ev,
                             direction=direction)
    if hit:
        traj.add_event(t_ev, "surface-hit")
    return EventOutcome(hit, t_ev, s_ev, traj)


def relaxation_substep(u0: float, target: float, eps: float, dt: float) -> float:
    """Exact solution of eps*du/dt = target - u over an interval dt."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    return target + (u0 - target) * math.exp(-dt / eps)
