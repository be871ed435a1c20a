"""Quantitative verification layer: sup errors, convergence-order fits,
the isochrone construction, the slow curve Q, and invariant-region checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import (DomainError, Sigmoid, SwitchedSystem, Trajectory,
                    as_state_vector, sigmoid_cubic)
from .regularize import (RegularizationRun, run_embedded, run_hysteresis,
                         run_smoothed)
from .resolvers import slide, utkin_control
from .stepping import IntegratorOptions, integrate_adaptive, integrate_to_event


def _as_trajectory(obj) -> Trajectory:
    if isinstance(obj, RegularizationRun):
        return obj.trajectory
    if isinstance(obj, Trajectory):
        return obj
    raise DomainError(f"expected a trajectory or run, got {type(obj).__name__}")


def sup_error(run, reference, window=None, n: int = 1000) -> float:
    """Max-norm sup of |x(t) - ref(t)| over a uniform time sample.

    ``run`` is a Trajectory or RegularizationRun (only its x components are
    compared); ``reference`` is a Trajectory or a map t -> R^k.
    """
    traj = _as_trajectory(run)
    if isinstance(reference, (Trajectory, RegularizationRun)):
        ref_traj = _as_trajectory(reference)
        ref = lambda t: ref_traj.sample(t)[: ref_traj.x_dim]
        t_lo = max(traj.t0, ref_traj.t0)
        t_hi = min(traj.t_end, ref_traj.t_end)
    else:
        ref = reference
        t_lo, t_hi = traj.t0, traj.t_end
    if window is not None:
        t_lo, t_hi = max(t_lo, window[0]), min(t_hi, window[1])
    if t_hi < t_lo:
        raise DomainError("empty comparison window")
    worst = 0.0
    for t in np.linspace(t_lo, t_hi, n):
        diff = traj.sample_x(t) - np.atleast_1d(ref(t))
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


@dataclass(frozen=True)
class ConvergenceReport:
    method: str
    alphas: tuple
    errors: tuple  # raw sup errors, same order as alphas
    fitted_order: float
    fitted_constant: float
    correction: str  # 'none' | 'log-factor'
    r_squared: float
    flags: tuple = ()
    y_sups: Optional[tuple] = None  # max |y| per run (embedding methods)


def _fit_loglog(alphas, errors):
    la = np.log(np.asarray(alphas, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(la, le, 1)
    pred = slope * la + intercept
    ss_res = float(np.sum((le - pred) ** 2))
    ss_tot = float(np.sum((le - np.mean(le)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(math.exp(intercept)), r2


def convergence_study(sys: SwitchedSystem, method: str, x0, T: float,
                      alphas: Sequence[float],
                      opts: IntegratorOptions = IntegratorOptions(),
                      kappa: float = 0.1) -> ConvergenceReport:
    """Sup error against the high-accuracy sliding reference, per alpha,
    with a log-log order fit.

    Methods: 'hysteresis' (vs the convex-combination reduction),
    'smoothing' (vs equivalent control), 'embedding-filippov' (alpha > 0,
    eps = alpha^2, errors log-corrected by |log(alpha/2)| before fitting),
    'embedding-utkin' (alpha < 0, eps = kappa*|alpha|).  ``alphas`` are the
    positive magnitudes in every case.
    """
    alphas = [float(a) for a in alphas]
    if len(alphas) < 4:
        raise DomainError("need at least 4 alpha values for an order fit")
    if any(a <= 0 for a in alphas):
        raise DomainError("alphas must be positive magnitudes")

    ref_kind = {"hysteresis": "filippov", "smoothing": "utkin",
                "embedding-filippov": "filippov", "embedding-utkin": "utkin"}
    if method not in ref_kind:
        raise DomainError(f"unknown method {method!r}")
    ref_opts = IntegratorOptions(rtol=1e-10, atol=1e-13)
    ref_traj = slide(sys, ref_kind[method], x0, T, ref_opts)

    errors, y_sups, flags = [], [], []
    for a in alphas:
        try:
            if method == "hysteresis":
                run = run_hysteresis(sys, x0, -a, -1, a, T, opts)
            elif method == "smoothing":
                run = run_smoothed(sys, x0, 0.0, a, None, T, opts)
            elif method == "embedding-filippov":
                run = run_embedded(sys, x0, 0.0, 1.0, a, a * a, T, opts,
                                   delta0=a * a)
            else:
                run = run_embedded(sys, x0, 0.0, 1.0, -a, kappa * a, T, opts)
        except Exception as exc:  # noqa: BLE001 - partial reports are data
            flags.append(f"alpha={a}: {exc}")
            errors.append(math.nan)
            y_sups.append(math.nan)
            continue
        if run.flags:
            flags.append(f"alpha={a}: {','.join(run.flags)}")
        errors.append(sup_error(run, ref_traj))
        if method.startswith("embedding"):
            traj = run.trajectory
            ys = [abs(traj.sample(t)[sys.k])
                  for t in np.linspace(traj.t0, traj.t_end, 500)]
            y_sups.append(max(ys))

    good = [(a, e) for a, e in zip(alphas, errors) if math.isfinite(e) and e > 0]
    correction = "log-factor" if method == "embedding-filippov" else "none"
    if len(good) >= 2:
        ga, ge = zip(*good)
        if correction == "log-factor":
            ge = [e / abs(math.log(a / 2.0)) for a, e in zip(ga, ge)]
        p, c, r2 = _fit_loglog(ga, ge)
    else:
        p = c = r2 = math.nan
        flags.append("too few successful runs for a fit")
    return ConvergenceReport(method, tuple(alphas), tuple(errors), p, c,
                             correction, r2, tuple(flags),
                             tuple(y_sups) if y_sups else None)


@dataclass(frozen=True)
class IsochronePoint:
    x: np.ndarray
    y_p: float
    residual: float  # remaining |t_minus - t_plus| after bisection
    ok: bool


def _hit_time(sys, x, y, u, y_target, opts):
    """Time for the planar flow with fixed u to reach y = y_target."""
    k = sys.k

    def fld(t, s):
        dx = np.asarray(sys.f(s[:k], s[k], u), dtype=float)
        return np.concatenate([dx, [float(sys.g(s[:k], s[k], u))]])

    g0 = abs(float(sys.g(x, y, u)))
    T_max = 50.0 * (abs(y_target - y) + abs(y_target)) / max(g0, 1e-12) + 1e-6
    out = integrate_to_event(fld, 0.0, np.concatenate([x, [y]]),
                             lambda s: s[k] - y_target, T_max, opts)
    return out.t if out.hit else None


def isochrone(sys: SwitchedSystem, alpha: float, x_grid, tol: float = 1e-9,
              opts: IntegratorOptions = IntegratorOptions()):
    """Points (x, y_p) from which the u=-1 flow reaches y=+alpha in the same
    time the u=+1 flow reaches y=-alpha; y_p found by bisection in
    (-alpha, alpha).
    """
    if alpha <= 0:
        raise DomainError("isochrone requires alpha > 0")
    points = []
    for x in x_grid:
        xv = as_state_vector(x, sys.k)

        def split(y):
            t_minus = _hit_time(sys, xv, y, -1.0, +alpha, opts)
            t_plus = _hit_time(sys, xv, y, +1.0, -alpha, opts)
            if t_minus is None or t_plus is None:
                return None
            return t_minus - t_plus

        lo, hi = -alpha, alpha  # split > 0 near lo, < 0 near hi
        ok = True
        h = math.inf
        y_mid = 0.0
        for _ in range(80):
            y_mid = 0.5 * (lo + hi)
            h = split(y_mid)
            if h is None:
                ok = False
                break
            if abs(h) <= tol:
                break
            if h > 0:
                lo = y_mid
            else:
                hi = y_mid
        if ok and (h is None or abs(h) > tol):
            ok = False
        points.append(IsochronePoint(xv, y_mid, abs(h) if h is not None
                                     else math.inf, ok))
    return points


@dataclass(frozen=True)
class QPoint:
    x: np.ndarray
    u: float
    y: float
    ok: bool  # False when u leaves the open middle branch (-1, 1)


def slow_curve_Q(sys: SwitchedSystem, alpha: float, eps: float, x_grid,
                 sigmoid: Optional[Sigmoid] = None):
    """The critical slow curve: u the equivalent control at x, and
    y = eps * phi^{-1}(u) - alpha * u on the middle sigmoid branch.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    sg = sigmoid or sigmoid_cubic()
    out = []
    for x in x_grid:
        xv = as_state_vector(x, sys.k)
        u = utkin_control(sys, xv)
        if abs(u) >= 1.0:
            out.append(QPoint(xv, u, math.nan, False))
            continue
        y = eps * sg.inverse(u) - alpha * u
        out.append(QPoint(xv, u, y, True))
    return out


# --------------------------------------------------------------------------
# Invariant-region checks.  Regions live in scaled coordinates (x, v, u)
# with v = y/|alpha|; each face carries a sampler and an outward normal, or
# a tangency check when the face is itself a flow surface.


@dataclass(frozen=True)
class Face:
    name: str
    sample: Optional[Callable] = None   # n -> ndarray (m, 3) of (x, v, u)
    normal: Optional[Callable] = None   # point -> outward normal (3,)
    tangency: Optional[Callable] = None  # n -> list of (point, residual)


@dataclass(frozen=True)
class RegionSpec:
    kind: str  # 'annulus-A' | 'block-B'
    params: dict
    faces: tuple
    field: Callable  # point (x, v, u) -> velocity (3,)


@dataclass(frozen=True)
class Violation:
    face: str
    point: np.ndarray
    rate: float  # outward rate (>= 0) or tangency residual


def region_check(sys: SwitchedSystem, spec: RegionSpec, n_samples: int = 100,
                 tangency_tol: float = 1e-8):
    """Sample every face; report points where the flow does not point inward
    (outward-rate >= 0), or where a flow-surface face fails its tangency
    residual.  Violations are data, not errors.
    """
    violations = []
    for face in spec.faces:
        if face.tangency is not None:
            for point, res in face.tangency(n_samples):
                if res > tangency_tol:
                    violations.append(Violation(face.name, point, res))
            continue
        for p in face.sample(n_samples):
            rate = float(np.dot(face.normal(p), spec.field(p)))
            if rate >= 0.0:
                violations.append(Violation(face.name, p, rate))
    return violations


def _lattice(n):
    """Midpoint offsets (i + 0.5)/n, a reproducible low-discrepancy sample."""
    return (np.arange(n) + 0.5) / n


def _grid2(x_lo, x_hi, p_lo, p_hi, n, n_x=5):
    n_p = max(1, -(-n // n_x))
    xs = x_lo + (x_hi - x_lo) * _lattice(n_x)
    ps = p_lo + (p_hi - p_lo) * _lattice(n_p)
    return [(x, p) for x in xs for p in ps]


def annulus_region(sys: SwitchedSystem, alpha: float, kappa: float,
                   delta0: float, sigmoid: Optional[Sigmoid] = None,
                   delta1: float = 0.25) -> RegionSpec:
    """The positively invariant annulus for alpha > 0, eps = kappa*alpha.

    The exterior border has two u-planes, two v-planes and two slanted
    planes tied to the field bound C through K = 2C + 1; the interior
    border adds two v-planes, two u-planes and two flow surfaces obtained
    by relaxing u between the rails for an explicitly known time.
    """
    if alpha <= 0 or not (0 < kappa < 0.25) or not (0 < delta0 <= delta1):
        raise DomainError("need alpha > 0, 0 < kappa < 1/4, 0 < delta0 <= 1/4")
    sg = sigmoid or sigmoid_cubic()
    eps = kappa * alpha
    M, k = sys.M, sys.k

    # Field bound C over the compact; the v-extent of the region depends on
    # K = 2C + 1, so iterate the bound to a fixed point.
    K = 1.0
    for _ in range(3):
        v_max = 1 + delta0 + kappa + kappa * K
        C = 0.0
        for xg in np.linspace(-M, M, 9):
            for vg in np.linspace(-v_max, v_max, 7):
                for ug in np.linspace(-1 - delta1, 1 + delta1, 9):
                    xvec = np.full(k, xg)
                    C = max(C, float(np.max(np.abs(sys.f(xvec, alpha * vg, ug)))),
                            abs(float(sys.g(xvec, alpha * vg, ug))))
        K = 2 * C + 1

    def fld(p):
        x, v, u = np.full(k, p[0]), p[1], p[2]
        du = (sg.value((v + u) / kappa) - u) / eps
        return np.array([float(np.max(np.abs(sys.f(x, alpha * v, u)))),
                         float(sys.g(x, alpha * v, u)) / alpha, du])

    def flow_field(t, s):
        # full (x..., v, u) flow in original time
        x, v, u = s[:k], s[k], s[k + 1]
        dx = np.asarray(sys.f(x, alpha * v, u), dtype=float)
        dv = float(sys.g(x, alpha * v, u)) / alpha
        du = (sg.value((v + u) / kappa) - u) / eps
        return np.concatenate([dx, [dv, du]])

    T_f = -eps * math.log(delta0 / (2 - delta0 - 2 * kappa))
    flow_opts = IntegratorOptions(rtol=1e-10, atol=1e-13, h_max=T_f / 20)

    def relax_down(x0, n_nodes=0):
        """Flow from the upper inner seed down to u = -1 + delta0."""
        s0 = np.concatenate([np.full(k, x0),
                             [-1 + delta0 + kappa, 1 - delta0 - 2 * kappa]])
        return integrate_adaptive(flow_field, 0.0, s0, T_f, flow_opts)

    def relax_up(x0):
        s0 = np.concatenate([np.full(k, x0),
                             [1 - delta0 - kappa, -1 + delta0 + 2 * kappa]])
        return integrate_adaptive(flow_field, 0.0, s0, T_f, flow_opts)

    def v3(x0):
        return relax_down(x0).sample(T_f)[k]

    def v6(x0):
        return relax_up(x0).sample(T_f)[k]

    v_bot = -1 - delta0 - kappa - kappa * K
    v_top = 1 + delta0 + kappa + kappa * K

    def plane_u(name, u_level, v_lo, v_hi, up):
        sgn = 1.0 if up else -1.0
        return Face(
            name,
            sample=lambda n: [np.array([x, v, u_level])
                              for x, v in _grid2(-M, M, v_lo, v_hi, n)],
            normal=lambda p: np.array([0.0, 0.0, sgn]))

    def plane_v(name, v_level, u_lo, u_hi, up):
        sgn = 1.0 if up else -1.0
        return Face(
            name,
            sample=lambda n: [np.array([x, v_level, u])
                              for x, u in _grid2(-M, M, u_lo, u_hi, n)],
            normal=lambda p: np.array([0.0, sgn, 0.0]))

    def slant(name, u_lo, u_hi, v_of_u, nrm):
        return Face(
            name,
            sample=lambda n: [np.array([x, v_of_u(u), u])
                              for x, u in _grid2(-M, M, u_lo, u_hi, n)],
            normal=lambda p: np.asarray(nrm, dtype=float))

    def tangency(relax, target, n):
        """Residual of the numeric u(t) against the exact relaxation law
        along a flow-surface face."""
        out = []
        for x0 in -M + 2 * M * _lattice(5):
            traj = relax(x0)
            u0 = traj.sample(0.0)[k + 1]
            for t in T_f * _lattice(max(1, n // 5)):
                s = traj.sample(t)
                u_exact = target + (u0 - target) * math.exp(-t / eps)
                out.append((s, abs(s[k + 1] - u_exact)))
        return out

    faces = (
        plane_u("r1", 1 + delta0, -1 - delta0 - kappa, v_top, up=True),
        slant("r2", -1 + delta0, 1 + delta0,
              lambda u: -1 - delta0 - kappa + K * kappa * (u - 1 - delta0) / 2,
              (0.0, -2 / (K * kappa), 1.0)),
        plane_v("r3", v_bot, -1 - delta0, -1 + delta0, up=False),
        plane_u("r4", -1 - delta0, v_bot, 1 + delta0 + kappa, up=False),
        slant("r5", -1 - delta0, 1 - delta0,
              lambda u: 1 + delta0 + kappa + K * kappa * (u + 1 + delta0) / 2,
              (0.0, 2 / (K * kappa), -1.0)),
        plane_v("r6", v_top, 1 - delta0, 1 + delta0, up=True),
        # interior border (outward = into the hole)
        Face("r1bar",
             sample=lambda n: [np.array([x, v, 1 - delta0])
                               for x in -M + 2 * M * _lattice(5)
                               for v in (-1 + delta0 + kappa)
                               + (v6(x) - (-1 + delta0 + kappa))
                               * _lattice(max(1, n // 5))],
             normal=lambda p: np.array([0.0, 0.0, -1.0])),
        plane_v("r2bar", -1 + delta0 + kappa, 1 - delta0 - 2 * kappa,
                1 - delta0, up=True),
        Face("r3bar", tangency=lambda n: tangency(relax_down, -1.0, n)),
        Face("r4bar",
             sample=lambda n: [np.array([x, v, -1 + delta0])
                               for x in -M + 2 * M * _lattice(5)
                               for v in v3(x)
                               + (1 - delta0 - kappa - v3(x))
                               * _lattice(max(1, n // 5))],
             normal=lambda p: np.array([0.0, 0.0, 1.0])),
        plane_v("r5bar", 1 - delta0 - kappa, -1 + delta0,
                -1 + delta0 + 2 * kappa, up=False),
        Face("r6bar", tangency=lambda n: tangency(relax_up, 1.0, n)),
    )
    params = dict(alpha=alpha, kappa=kappa, delta0=delta0, eps=eps, C=C, K=K,
                  T_f=T_f)
    return RegionSpec("annulus-A", params, faces, fld)


def block_region(sys: SwitchedSystem, alpha: float, kappa: float, delta: float,
                 sigmoid: Optional[Sigmoid] = None) -> RegionSpec:
    """The positively invariant block for alpha < 0 (equivalent-control side).

    Constants are concretized numerically: u* bounds the u-band where g
    keeps a sign away from its root, G the corresponding margin, and
    sigma = G + 2 sets the slope offset of the slanted faces.
    """
    if alpha >= 0:
        raise DomainError("the block is defined for alpha < 0")
    ak = abs(kappa)
    if ak <= 0:
        raise DomainError("kappa must be nonzero")
    sg = sigmoid or sigmoid_cubic()
    M, k = sys.M, sys.k

    # u*: beyond the widest equivalent-control root, symmetrized; G: the
    # resulting sign margin of g on |u| >= u*.
    roots = [utkin_control(sys, np.full(k, xg)) for xg in np.linspace(-M, M, 9)]
    r_max = max(max(roots), -min(roots))
    if r_max >= 1.0:
        raise DomainError("equivalent control reaches the rails; no u* band")
    u_star = 0.5 * (r_max + 1.0)
    G = math.inf
    for xg in np.linspace(-M, M, 9):
        for vg in np.linspace(-M, M, 7):
            xvec = np.full(k, xg)
            for ug in np.linspace(u_star, 1.25, 5):
                G = min(G, -float(sys.g(xvec, abs(alpha) * vg, ug)))
            for ug in np.linspace(-1.25, -u_star, 5):
                G = min(G, float(sys.g(xvec, abs(alpha) * vg, ug)))
    if G <= 0:
        raise DomainError("no uniform sign margin G > 0 on the u* band")
    sigma = G + 2.0
    if not (0 < delta <= ak <= (1.0 - u_star) / (2.0 * sigma)):
        raise DomainError(
            f"hypotheses need 0 < delta <= |kappa| <= (1-u*)/(2*sigma) "
            f"= {(1.0 - u_star) / (2.0 * sigma):.4g}")

    def surf_u(v):
        """u on the upper fold surface phi((v-u)/|k|) - u - |k| = 0."""
        if v >= 1.0:
            return 1.0 - ak
        lo, hi = v - ak, v  # h is positive at lo, negative at hi
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            h = sg.value((v - mid) / ak) - mid - ak
            if h > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    u_delta = surf_u(1.0 - delta)

    def fld(p):
        x, v, u = np.full(k, p[0]), p[1], p[2]
        dx = abs(alpha) * float(np.max(np.abs(sys.f(x, abs(alpha) * v, u))))
        dv = float(sys.g(x, abs(alpha) * v, u))
        du = (sg.value((v - u) / ak) - u) / ak
        return np.array([dx, dv, du])

    def plane_u(name, u_level, v_lo, v_hi, up):
        sgn = 1.0 if up else -1.0
        return Face(
            name,
            sample=lambda n: [np.array([x, v, u_level])
                              for x, v in _grid2(-M, M, v_lo, v_hi, n)],
            normal=lambda p: np.array([0.0, 0.0, sgn]))

    def plane_v(name, v_level, u_lo, u_hi, up):
        sgn = 1.0 if up else -1.0
        return Face(
            name,
            sample=lambda n: [np.array([x, v_level, u])
                              for x, u in _grid2(-M, M, u_lo, u_hi, n)],
            normal=lambda p: np.array([0.0, sgn, 0.0]))

    def fold_normal(p, mirror):
        v, u = p[1], p[2]
        dphi = sg.derivative((v - u) / ak) / ak
        nrm = np.array([0.0, dphi, -dphi - 1.0])
        return -nrm if mirror else nrm

    faces = (
        plane_u("B1", -1 + delta - sigma * ak, -M, -1 + delta, up=False),
        Face("B2",
             sample=lambda n: [np.array([x, v, v - sigma * ak])
                               for x, v in _grid2(-M, M, -1 + delta,
                                                  1 - delta, n)],
             normal=lambda p: np.array([0.0, 1.0, -1.0])),
        plane_v("B3", 1 - delta, 1 - delta - sigma * ak, u_delta, up=True),
        Face("B4",
             sample=lambda n: [np.array([x, v, surf_u(v)])
                               for x, v in _grid2(-M, M, 1 - delta, M, n)],
             normal=lambda p: fold_normal(p, mirror=False)),
        plane_v("B5", M, 1 - ak, 1 - delta + sigma * ak, up=True),
        plane_u("B6", 1 - delta + sigma * ak, 1 - delta, M, up=True),
        Face("B7",
             sample=lambda n: [np.array([x, v, v + sigma * ak])
                               for x, v in _grid2(-M, M, -1 + delta,
                                                  1 - delta, n)],
             normal=lambda p: np.array([0.0, -1.0, 1.0])),
        plane_v("B8", -1 + delta, -u_delta, -1 + delta + sigma * ak, up=False),
        Face("B9",
             sample=lambda n: [np.array([x, v, -surf_u(-v)])
                               for x, v in _grid2(-M, M, -M, -1 + delta, n)],
             normal=lambda p: fold_normal(p, mirror=True)),
        plane_v("B10", -M, -1 + delta - sigma * ak, -1 + ak, up=False),
    )
    params = dict(alpha=alpha, kappa=kappa, delta=delta, u_star=u_star, G=G,
                  sigma=sigma, u_delta=u_delta)
    return RegionSpec("block-B", params, faces, fld)
