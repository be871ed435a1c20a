"""Numerical laboratory for planar relay-switched ODE systems.

Systems of the form

    dx/dt = f(x, y; u),   dy/dt = g(x, y; u),   u = sign(y),

with the two canonical sliding-mode reductions on y=0 (Filippov's convex
combination and the equivalent-control root), three regularizations
(hysteretic relay, sigmoid smoothing, slow-fast embedding), and an
analysis layer for convergence orders, isochrones, slow curves and
invariant-region checks.
"""

from .model import (
    DELTA1,
    DomainError,
    EvaluationError,
    Sigmoid,
    State,
    EmbeddedState,
    SwitchedSystem,
    Trajectory,
    check_transversality,
    cubic_relay_system,
    eval_planar,
    sigmoid_cubic,
)
from .stepping import (
    EventOutcome,
    IntegrationError,
    IntegratorOptions,
    StiffnessError,
    integrate_adaptive,
    integrate_to_event,
    relaxation_substep,
    rk4_fixed,
)
from .resolvers import (
    DegenerateCrossingError,
    SlidingField,
    filippov_field,
    filippov_lambda,
    slide,
    sliding_field,
    utkin_control,
    utkin_field,
)
from .regularize import (
    CycleRecord,
    PoincareReturn,
    RegularizationRun,
    measure_cycle_asymptotics,
    poincare_return,
    run_embedded,
    run_hysteresis,
    run_smoothed,
)
from .analysis import (
    ConvergenceReport,
    Face,
    RegionSpec,
    annulus_region,
    block_region,
    convergence_study,
    isochrone,
    region_check,
    slow_curve_Q,
    sup_error,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
