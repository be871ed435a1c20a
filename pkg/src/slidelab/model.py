"""Domain types: switched systems, sigmoids, states and trajectories."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Admissible relay overshoot: embedded runs keep |u| <= 1 + DELTA1.
DELTA1 = 0.25


class EvaluationError(ValueError):
    """A vector-field component evaluated to a non-finite value."""


class DomainError(ValueError):
    """An argument left the admissible domain of an operation."""


def as_state_vector(x, k: int) -> np.ndarray:
    """Coerce ``x`` (scalar or sequence) to a float array of shape (k,)."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (k,):
        raise DomainError(f"expected state vector of length {k}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SwitchedSystem:
    """The pair (f, g) parameterized by the relay value u.

    ``f`` maps (x, y, u) to an R^k rate, ``g`` to a scalar rate; ``k`` is
    the dimension of x and ``M`` the domain bound |x|_inf <= M on which the
    transversality conditions are expected to hold.
    """

    f: Callable[[np.ndarray, float, float], np.ndarray]
    g: Callable[[np.ndarray, float, float], float]
    k: int = 1
    M: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("state dimension k must be >= 1")
        if not (self.M > 0):
            raise DomainError("domain bound M must be positive")

    def f_plus(self, x, y):
        return np.atleast_1d(np.asarray(self.f(x, y, +1.0), dtype=float))

    def f_minus(self, x, y):
        return np.atleast_1d(np.asarray(self.f(x, y, -1.0), dtype=float))

    def g_plus(self, x, y):
        return float(self.g(x, y, +1.0))

    def g_minus(self, x, y):
        return float(self.g(x, y, -1.0))


def cubic_relay_system(M: float = 2.0) -> SwitchedSystem:
    """The classic one-dimensional benchmark with a cubic relay nonlinearity:

        dx/dt = 0.3 + u^3,   dy/dt = -0.5 - u.

    Its two sliding reductions disagree even in sign, which makes it the
    standard probe for every regularization in this package.
    """
    return SwitchedSystem(
        f=lambda x, y, u: np.array([0.3 + u**3]),
        g=lambda x, y, u: -0.5 - u,
        k=1,
        M=M,
        name="cubic-relay",
    )


def eval_planar(sys: SwitchedSystem, x, y: float, u: float):
    """Evaluate (f, g) at (x, y, u), checking finiteness of the result."""
    xv = as_state_vector(x, sys.k)
    dx = np.atleast_1d(np.asarray(sys.f(xv, float(y), float(u)), dtype=float))
    if dx.shape != (sys.k,):
        raise EvaluationError(f"f returned shape {dx.shape}, expected ({sys.k},)")
    for i, v in enumerate(dx):
        if not math.isfinite(v):
            raise EvaluationError(f"f component {i} is non-finite at (x={xv}, y={y}, u={u})")
    dy = float(sys.g(xv, float(y), float(u)))
    if not math.isfinite(dy):
        raise EvaluationError(f"g is non-finite at (x={xv}, y={y}, u={u})")
    return dx, dy


@dataclass(frozen=True)
class TransversalityReport:
    ok: bool
    # Worst (least favourable) values over all samples: the conditions are
    # g_plus_worst < 0 < g_minus_worst and dg_du_worst < 0.
    g_plus_worst: float
    g_minus_worst: float
    dg_du_worst: float
    failures: tuple = ()


def check_transversality(sys: SwitchedSystem, x_samples: Sequence, du: float = 1e-6,
                         n_u: int = 9) -> TransversalityReport:
    """Verify g(x,0,+1) < 0 < g(x,0,-1) and dg/du(x,0,u) < 0 on samples.

    The u-derivative is taken by central finite differences at ``n_u``
    points across [-1, 1].  Failures are reported, never raised.
    """
    gp_worst = -math.inf
    gm_worst = math.inf
    slope_worst = -math.inf
    failures = []
    u_grid = np.linspace(-1.0, 1.0, n_u)
    for x in x_samples:
        xv = as_state_vector(x, sys.k)
        gp = sys.g_plus(xv, 0.0)
        gm = sys.g_minus(xv, 0.0)
        gp_worst = max(gp_worst, gp)
        gm_worst = min(gm_worst, gm)
        if not (gp < 0.0 < gm):
            failures.append((tuple(xv), "sign", gp, gm))
        for u in u_grid:
            dgdu = (float(sys.g(xv, 0.0, u + du)) - float(sys.g(xv, 0.0, u - du))) / (2 * du)
            slope_worst = max(slope_worst, dgdu)
            if not dgdu < 0.0:
                failures.append((tuple(xv), "slope", float(u), dgdu))
    ok = (gp_worst < 0.0 < gm_worst) and slope_worst < 0.0
    return TransversalityReport(ok, gp_worst, gm_worst, slope_worst, tuple(failures))


@dataclass(frozen=True)
class Sigmoid:
    """A saturating transition function with value, derivative and inverse.

    ``value`` equals sign(w) for |w| >= 1, is odd and strictly increasing
    on (-1, 1); ``inverse`` is defined on the open interval (-1, 1).
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    inverse: Callable[[float], float]


def sigmoid_cubic() -> Sigmoid:
    """The C^1 cubic sigmoid (3w - w^3)/2 on the core |w| <= 1."""

    def value(w: float) -> float:
        if w >= 1.0:
            return 1.0
        if w <= -1.0:
            return -1.0
        return (3.0 * w - w**3) / 2.0

    def derivative(w: float) -> float:
        if abs(w) >= 1.0:
            return 0.0
        return 1.5 * (1.0 - w * w)

    def inverse(u: float) -> float:
        u = float(u)
        if abs(u) >= 1.0:
            raise DomainError(f"sigmoid inverse defined only on (-1, 1), got {u}")
        lo, hi = -1.0, 1.0
        # Safeguarded bisection; the cubic is strictly monotone on the core.
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            if value(mid) < u:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return Sigmoid(value=value, derivative=derivative, inverse=inverse)


@dataclass(frozen=True)
class State:
    x: np.ndarray
    y: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and math.isfinite(self.y)):
            raise DomainError("state components must be finite")


@dataclass(frozen=True)
class EmbeddedState:
    x: np.ndarray
    y: float
    u: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and math.isfinite(self.y) and math.isfinite(self.u)):
            raise DomainError("state components must be finite")
        if abs(self.u) > 1.0 + DELTA1:
            raise DomainError(f"|u| = {abs(self.u)} exceeds 1 + {DELTA1}")


def _hermite(t0, t1, s0, s1, d0, d1, t):
    h = t1 - t0
    th = (t - t0) / h
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th * th * (3 - 2 * th)
    h11 = th * th * (th - 1)
    return h00 * s0 + h10 * h * d0 + h01 * s1 + h11 * h * d1


class Trajectory:
    """Time-stamped states with events and per-step cubic dense output.

    Nodes are appended with their time derivative; consecutive nodes form a
    Hermite segment, so dense evaluation at stored nodes reproduces stored
    states exactly.  Times are strictly increasing; a repeated time only
    refreshes the outgoing derivative (used at switching instants, where the
    state is continuous but the field jumps).
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.x_dim = dim  # producers override when trailing components are (y, u)
        self._t: list[float] = []
        self._s: list[np.ndarray] = []
        self.segments: list[tuple] = []  # (t0, t1, s0, s1, d0, d1)
        self.events: list[tuple[float, str]] = []
        self.flags: list[str] = []
        self._pending_d: np.ndarray | None = None

    def add_node(self, t: float, state, deriv) -> None:
        s = np.asarray(state, dtype=float).reshape(self.dim)
        d = np.asarray(deriv, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(s)):
            raise EvaluationError(f"non-finite state at t={t}")
        if self._t:
            t_last = self._t[-1]
            if t <= t_last:
                if t < t_last:
                    raise DomainError("trajectory times must be strictly increasing")
                # Same instant: keep the node, restart the next segment from
                # the new (right-hand) derivative.
                self._pending_d = d
                return
            self.segments.append((t_last, t, self._s[-1], s, self._pending_d, d))
        self._t.append(float(t))
        self._s.append(s)
        self._pending_d = d

    def add_event(self, t: float, kind: str) -> None:
        self.events.append((float(t), kind))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._t)

    @property
    def states(self) -> np.ndarray:
        return np.asarray(self._s)

    @property
    def t0(self) -> float:
        return self._t[0]

    @property
    def t_end(self) -> float:
        return self._t[-1]

    def __len__(self) -> int:
        return len(self._t)

    def sample(self, t: float) -> np.ndarray:
        """Dense-output evaluation at time t within [t0, t_end]."""
        if not self._t:
            raise DomainError("empty trajectory")
        eps = 1e-12 * max(1.0, abs(self._t[-1]))
        if t < self._t[0] - eps or t > self._t[-1] + eps:
            raise DomainError(f"t={t} outside [{self._t[0]}, {self._t[-1]}]")
        if not self.segments:
            return self._s[0].copy()
        t = min(max(t, self._t[0]), self._t[-1])
        i = bisect.bisect_right(self._t, t) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        t0, t1, s0, s1, d0, d1 = self.segments[i]
        return _hermite(t0, t1, s0, s1, d0, d1, t)

    def sample_x(self, t: float) -> np.ndarray:
        return self.sample(t)[: self.x_dim]
