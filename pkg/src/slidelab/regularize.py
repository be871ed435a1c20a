"""The three regularized executions: hysteretic relay, smoothed switch, and
the slow-fast relay embedding, plus cycle and return-map instrumentation.

All runs share the convention that the produced Trajectory has state
(x1..xk, y) or (x1..xk, y, u), with ``x_dim = k`` so error functionals can
project onto the x components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (DomainError, Sigmoid, SwitchedSystem, Trajectory,
                    as_state_vector, sigmoid_cubic)
from .stepping import IntegratorOptions, _drive, relaxation_substep


@dataclass(frozen=True)
class CycleRecord:
    """One relay cycle: a u=-1 phase followed by a u=+1 phase."""

    index: int
    x_i: np.ndarray  # state at cycle start
    T_minus: float
    T_plus: float
    delta_x: np.ndarray  # displacement over the full cycle


@dataclass
class RegularizationRun:
    method: str  # 'hysteresis' | 'smoothing' | 'embedding'
    alpha: float
    eps: Optional[float]
    kappa: Optional[float]
    delta0: Optional[float]
    trajectory: Trajectory
    cycles: list = field(default_factory=list)

    @property
    def flags(self):
        return self.trajectory.flags


def _domain_margin(sys, s):
    return sys.M - float(np.max(np.abs(s[: sys.k])))


def run_hysteresis(sys: SwitchedSystem, x0, y0: float, mode0: int, alpha: float,
                   T: float, opts: IntegratorOptions = IntegratorOptions()
                   ) -> RegularizationRun:
    """Relay with overlap: switch to u=+1 at y=+alpha, to u=-1 at y=-alpha.

    Between switches u is frozen at the current mode and the planar system
    is integrated to the next switching-plane hit.  One CycleRecord is
    logged per (-1 phase, +1 phase) pair that starts on y = -alpha.
    """
    if alpha <= 0:
        raise DomainError("hysteresis requires alpha > 0")
    if mode0 not in (-1, +1):
        raise DomainError("mode0 must be -1 or +1")
    x0v = as_state_vector(x0, sys.k)
    tiny = 1e-13 * max(1.0, alpha)
    if mode0 == -1 and y0 > alpha + tiny:
        raise DomainError("mode -1 requires y0 <= +alpha")
    if mode0 == +1 and y0 < -alpha - tiny:
        raise DomainError("mode +1 requires y0 >= -alpha")

    traj = Trajectory(sys.k + 1)
    traj.x_dim = sys.k
    run = RegularizationRun("hysteresis", alpha, None, None, None, traj)

    s = np.concatenate([x0v, [float(y0)]])
    t = 0.0
    mode = mode0
    phases = []  # (t_start, mode, y_start, t_end, ended_by_switch)

    def make_field(m):
        def fld(tt, ss):
            dx = np.asarray(sys.f(ss[: sys.k], ss[sys.k], float(m)), dtype=float)
            dy = float(sys.g(ss[: sys.k], ss[sys.k], float(m)))
            return np.concatenate([dx, [dy]])
        return fld

    while t < T - tiny:
        y = s[sys.k]
        # Boundary-consistent mode: flip immediately if already on the plane.
        if mode == -1 and y >= alpha - tiny:
            mode = +1
            traj.add_event(t, "switch-up")
            continue
        if mode == +1 and y <= -alpha + tiny:
            mode = -1
            traj.add_event(t, "switch-down")
            continue

        plane = (lambda ss: alpha - ss[sys.k]) if mode == -1 else \
                (lambda ss: ss[sys.k] + alpha)
        margin = lambda tt, ss: min(plane(ss), _domain_margin(sys, ss))
        t_start, y_start = t, y
        hit, t_ev, s_ev = _drive(make_field(mode), t, s, T, opts, traj,
                                 event=margin)
        if not hit:
            s_end = traj.states[-1]
            phases.append((t_start, mode, y_start, T, False))
            if plane(s_end) > plane(s) + tiny:
                traj.flags.append("non-attracting")
            t = T
            break
        if _domain_margin(sys, s_ev) <= plane(s_ev):
            phases.append((t_start, mode, y_start, t_ev, False))
            traj.add_event(t_ev, "surface-hit")
            traj.flags.append("domain-exit")
            t, s = t_ev, s_ev
            break
        phases.append((t_start, mode, y_start, t_ev, True))
        traj.add_event(t_ev, "switch-up" if mode == -1 else "switch-down")
        mode = -mode
        t, s = t_ev, s_ev

    # Assemble cycle records from consecutive completed phases.
    idx = 0
    for i in range(len(phases) - 1):
        t0p, m0, ys, t1p, sw0 = phases[i]
        _, m1, _, t2p, sw1 = phases[i + 1]
        if m0 == -1 and m1 == +1 and sw0 and sw1 and abs(ys + alpha) <= 1e-9:
            x_i = traj.sample(t0p)[: sys.k]
            x_f = traj.sample(t2p)[: sys.k]
            run.cycles.append(CycleRecord(idx, x_i, t1p - t0p, t2p - t1p, x_f - x_i))
            idx += 1
    return run


def run_smoothed(sys: SwitchedSystem, x0, y0: float, alpha: float,
                 sigmoid: Optional[Sigmoid] = None, T: float = 1.0,
                 opts: IntegratorOptions = IntegratorOptions()) -> RegularizationRun:
    """Smooth relay u = phi(y/alpha): a single adaptive planar integration."""
    if alpha <= 0:
        raise DomainError("smoothing requires alpha > 0")
    phi = (sigmoid or sigmoid_cubic()).value
    x0v = as_state_vector(x0, sys.k)
    if abs(y0) > alpha:
        raise DomainError("smoothing requires |y0| <= alpha")

    def fld(t, s):
        u = phi(s[sys.k] / alpha)
        dx = np.asarray(sys.f(s[: sys.k], s[sys.k], u), dtype=float)
        dy = float(sys.g(s[: sys.k], s[sys.k], u))
        return np.concatenate([dx, [dy]])

    traj = Trajectory(sys.k + 1)
    traj.x_dim = sys.k
    s0 = np.concatenate([x0v, [float(y0)]])
    hit, t_ev, s_ev = _drive(fld, 0.0, s0, T, opts, traj,
                             event=lambda t, s: _domain_margin(sys, s))
    if hit:
        traj.add_event(t_ev, "surface-hit")
        traj.flags.append("domain-exit")
    return RegularizationRun("smoothing", alpha, None, None, None, traj)


def run_embedded(sys: SwitchedSystem, x0, y0: float, u0: float, alpha: float,
                 eps: float, T: float,
                 opts: IntegratorOptions = IntegratorOptions(),
                 sigmoid: Optional[Sigmoid] = None,
                 delta0: Optional[float] = None) -> RegularizationRun:
    """The 3D relay embedding  eps * du/dt = phi((y + alpha*u)/eps) - u.

    Outside the sigmoid core (|(y+alpha*u)/eps| > 1) the u-equation is a
    linear relaxation toward sign(w) and is advanced exactly; inside the
    core the full 3D system is stepped adaptively with h <= eps/4.  For
    alpha > 0 cycles are detected as downward y=0 crossings with u near +1.
    """
    if alpha == 0:
        raise DomainError("embedding requires alpha != 0")
    if eps <= 0:
        raise DomainError("embedding requires eps > 0")
    kappa = eps / alpha
    if alpha > 0 and not kappa < 0.25:
        raise DomainError(f"alpha > 0 requires kappa = eps/alpha < 1/4, got {kappa}")
    if abs(u0) > 1.25:
        raise DomainError("|u0| must be <= 1 + 1/4")
    sg = sigmoid or sigmoid_cubic()
    if delta0 is None:
        delta0 = alpha * alpha
    x0v = as_state_vector(x0, sys.k)
    k = sys.k

    traj = Trajectory(k + 2)
    traj.x_dim = k
    run = RegularizationRun("embedding", alpha, eps, kappa, delta0, traj)

    def w_of(y, u):
        return (y + alpha * u) / eps

    def core_field(t, s):
        x, y, u = s[:k], s[k], s[k + 1]
        dx = np.asarray(sys.f(x, y, u), dtype=float)
        dy = float(sys.g(x, y, u))
        du = (sg.value(w_of(y, u)) - u) / eps
        return np.concatenate([dx, [dy, du]])

    t = 0.0
    s = np.concatenate([x0v, [float(y0), float(u0)]])
    tiny = 1e-13 * max(1.0, T)
    # Event localization is a time bracket; with dw/dt of order 1/eps^2 the
    # w-margin at a phase handoff can be off by event_tol/eps^2, so arming
    # must treat values that small as "still on the boundary".
    w_tol = min(1e-6, 1e-3 * abs(kappa))

    while t < T - tiny:
        w = w_of(s[k], s[k + 1])
        bdry = w_tol
        if w > 1.0 + bdry:
            phase = +1
        elif w < -1.0 - bdry:
            phase = -1
        elif abs(abs(w) - 1.0) <= bdry:
            # On the core boundary the two dynamics coincide (phi is
            # continuous), so the sign of dw/dt decides the next phase.
            wsgn = 1.0 if w > 0 else -1.0
            du = (sg.value(w) - s[k + 1]) / eps
            dy = float(sys.g(s[:k], s[k], s[k + 1]))
            dw = (dy + alpha * du) / eps
            phase = int(wsgn) if dw * wsgn > 0 else 0
        else:
            phase = 0

        if phase == 0:
            core_opts = IntegratorOptions(
                rtol=opts.rtol, atol=opts.atol, h_init=min(eps / 8, T - t),
                h_min=opts.h_min, h_max=eps / 4, event_tol=opts.event_tol,
                max_steps=opts.max_steps)
            margin = lambda tt, ss: min(1.0 - abs(w_of(ss[k], ss[k + 1])),
                                        _domain_margin(sys, ss))
            hit, t_ev, s_ev = _drive(core_field, t, s, T, core_opts, traj,
                                     event=margin, direction=+1.0,
                                     zero_tol=w_tol)
            if not hit:
                t = T
                break
            if _domain_margin(sys, s_ev) <= 1.0 - abs(w_of(s_ev[k], s_ev[k + 1])):
                traj.flags.append("domain-exit")
                t, s = t_ev, s_ev
                break
            t, s = t_ev, s_ev
        else:
            target = float(phase)
            u_start, t_start = s[k + 1], t
            traj.add_event(t, "switch-down" if phase == -1 else "switch-up")

            def u_at(tt):
                return relaxation_substep(u_start, target, eps, tt - t_start)

            def sat_field(tt, ss):
                u = u_at(tt)
                dx = np.asarray(sys.f(ss[:k], ss[k], u), dtype=float)
                dy = float(sys.g(ss[:k], ss[k], u))
                return np.concatenate([dx, [dy]])

            def sat_margin(tt, ss):
                return min(phase * (w_of(ss[k], u_at(tt)) - phase),
                           _domain_margin(sys, ss))

            sat_opts = IntegratorOptions(
                rtol=opts.rtol, atol=opts.atol, h_init=min(eps, T - t),
                h_min=opts.h_min, h_max=opts.h_max, event_tol=opts.event_tol,
                max_steps=opts.max_steps)
            sub = Trajectory(k + 1)
            hit, t_ev, s_ev = _drive(sat_field, t, s[: k + 1], T, sat_opts, sub,
                                     event=sat_margin, direction=+1.0,
                                     zero_tol=w_tol)
            # Lift the planar nodes into the 3D trajectory with the exact u.
            for tt, ss in zip(sub.times, sub.states):
                u = u_at(tt)
                du = (target - u) / eps
                dxy = sat_field(tt, ss)
                traj.add_node(tt, np.concatenate([ss, [u]]),
                              np.concatenate([dxy, [du]]))
            if not hit:
                t = T
                break
            if _domain_margin(sys, s_ev) <= phase * (w_of(s_ev[k], u_at(t_ev)) - phase):
                traj.flags.append("domain-exit")
                t = t_ev
                s = np.concatenate([s_ev, [u_at(t_ev)]])
                break
            t = t_ev
            s = np.concatenate([s_ev, [u_at(t_ev)]])

    if alpha > 0:
        _detect_embedded_cycles(run, sys)
    return run


def _zero_crossings(traj, comp_fn, t_min=0.0, downward=True):
    """Times where a scalar function of the state crosses zero between nodes."""
    ts = traj.times
    vals = np.array([comp_fn(s) for s in traj.states])
    out = []
    for i in range(len(ts) - 1):
        if ts[i + 1] <= t_min:
            continue
        a, b = vals[i], vals[i + 1]
        if downward:
            crossed = a > 0.0 >= b
        else:
            crossed = a < 0.0 <= b
        if crossed:
            lo, hi = ts[i], ts[i + 1]
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                v = comp_fn(traj.sample(mid))
                if (v > 0) == downward:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-14 * max(1.0, hi):
                    break
            out.append(0.5 * (lo + hi))
    return out


def _detect_embedded_cycles(run: RegularizationRun, sys: SwitchedSystem):
    """Log cycles at downward y=0 crossings with u near +1 (alpha > 0)."""
    traj = run.trajectory
    k = sys.k
    window = max(run.delta0, 1e-9)
    hits = []
    for t in _zero_crossings(traj, lambda s: s[k], downward=True):
        u = traj.sample(t)[k + 1]
        if abs(u - 1.0) <= 10 * window:
            traj.add_event(t, "section-crossing")
            hits.append(t)
    switch_downs = [t for t, kind in traj.events if kind == "switch-down"]
    switch_ups = [t for t, kind in traj.events if kind == "switch-up"]
    for i in range(len(hits) - 1):
        t0, t1 = hits[i], hits[i + 1]
        sd = [t for t in switch_downs if t0 < t < t1]
        su = [t for t in switch_ups if t0 < t < t1]
        if not (sd and su):
            continue
        T_minus = su[0] - sd[0]  # u near -1 between switch-down and switch-up
        T_plus = (t1 - t0) - T_minus
        x_i = traj.sample(t0)[:k]
        x_f = traj.sample(t1)[:k]
        run.cycles.append(CycleRecord(i, x_i, T_minus, T_plus, x_f - x_i))


def measure_cycle_asymptotics(run: RegularizationRun, sys: SwitchedSystem):
    """Per-cycle residuals |T_minus_i - 2*alpha/g(x_i, 0, -1)|.

    The leading-order law for the u=-1 phase duration of a relay cycle is
    2*alpha / g(x_i, 0, -1); the residual decays like alpha^2 for fields
    whose x-dependence dominates the correction.
    """
    if run.method != "hysteresis":
        raise DomainError("cycle asymptotics are defined for hysteresis runs")
    if not run.cycles:
        raise DomainError("run has no complete cycles")
    res = []
    for c in run.cycles:
        gm = sys.g_minus(c.x_i, 0.0)
        res.append(abs(c.T_minus - 2.0 * run.alpha / gm))
    return res


@dataclass(frozen=True)
class PoincareReturn:
    T1: float
    x_return: np.ndarray
    sections: tuple  # ordered (time, name) crossings of the transversal sections
    flagged: Optional[str] = None


def poincare_return(sys: SwitchedSystem, alpha: float, eps: float, delta0: float,
                    z0, opts: IntegratorOptions = IntegratorOptions(),
                    T_cap: Optional[float] = None) -> PoincareReturn:
    """First return to the section {v = y/alpha = 0, u near +1}, alpha > 0.

    ``z0`` is (x0, v0=0, u0) with |u0 - 1| <= delta0 (widened to a small
    tolerance when delta0 = 0).  Returns the elapsed time, the x-state at
    return, and the ordered trace of the eight auxiliary sections the
    orbit crosses on its way around the relay cycle.
    """
    if alpha <= 0:
        raise DomainError("the return map is defined for alpha > 0")
    z0 = np.asarray(z0, dtype=float)
    x0, v0, u0 = z0[: sys.k], z0[sys.k], z0[sys.k + 1]
    window = max(delta0, 1e-7)
    if abs(v0) > 1e-12 or abs(u0 - 1.0) > window:
        raise DomainError("z0 must lie on the return section (v=0, u near +1)")
    if T_cap is None:
        T_cap = 200.0 * alpha

    run = run_embedded(sys, x0, v0 * alpha, u0, alpha, eps, T_cap, opts,
                       delta0=delta0)
    traj = run.trajectory
    k = sys.k
    flag = None
    if "domain-exit" in traj.flags:
        flag = "domain-exit"

    # First downward y=0 crossing (after leaving the section) with u near 1.
    t_ret = None
    for t in _zero_crossings(traj, lambda s: s[k], t_min=1e-6 * alpha,
                             downward=True):
        if t <= 1e-6 * alpha:
            continue
        u = traj.sample(t)[k + 1]
        if abs(u - 1.0) <= window:
            t_ret = t
            break
    if t_ret is None:
        return PoincareReturn(math.nan, np.full(k, math.nan), (),
                              flag or "no-return")

    sections = _section_trace(sys, run, t_ret)
    x_ret = traj.sample(t_ret)[:k]
    return PoincareReturn(t_ret, x_ret, tuple(sections), flag)


def _section_trace(sys, run, t_end):
    """Ordered crossings of the eight auxiliary sections in (v, u) space.

    Four sections are v-levels crossed with u pinned near one of the rails,
    four are u-levels crossed on a fixed sign of v; the two 'landing'
    v-levels carry a log correction with the field bound C.
    """
    traj = run.trajectory
    k = sys.k
    alpha, kappa, d0 = run.alpha, run.kappa, run.delta0
    d0 = max(d0, 1e-9)
    # Field bound over the slab |y| <= alpha, |u| <= 1 + d0.
    C = 0.0
    for xg in np.linspace(-sys.M, sys.M, 7):
        for yg in np.linspace(-alpha, alpha, 5):
            for ug in np.linspace(-1 - d0, 1 + d0, 9):
                C = max(C, abs(float(sys.g(np.full(k, xg), yg, ug))))
    vlog = C * kappa * math.log(d0 / (2 - d0 - 2 * kappa))

    u_win = 10 * d0 + 1e-7
    v_levels = [
        ("S1", -1 + d0 + kappa, lambda u: abs(u - 1) <= u_win),
        ("S4", -1 + d0 + kappa - vlog, lambda u: abs(u + 1) <= u_win),
        ("S5", 1 - d0 - kappa, lambda u: abs(u + 1) <= u_win),
        ("S8", 1 - d0 - kappa + vlog, lambda u: abs(u - 1) <= u_win),
    ]
    u_levels = [
        ("S2", 1 - d0 - 2 * kappa, lambda v: v < 0),
        ("S3", -1 + d0, lambda v: v < 0),
        ("S6", -1 + d0 + 2 * kappa, lambda v: v > 0),
        ("S7", 1 - d0, lambda v: v > 0),
    ]
    out = []
    for name, lvl, member in v_levels:
        for down in (True, False):
            for t in _zero_crossings(traj, lambda s: s[k] / alpha - lvl,
                                     downward=down):
                if t <= t_end and member(traj.sample(t)[k + 1]):
                    out.append((t, name))
    for name, lvl, member in u_levels:
        for down in (True, False):
            for t in _zero_crossings(traj, lambda s: s[k + 1] - lvl,
                                     downward=down):
                if t <= t_end and member(traj.sample(t)[k] / alpha):
                    out.append((t, name))
    out.sort()
    return out
