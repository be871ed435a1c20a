import math

import numpy as np
import pytest

from slidelab import (DELTA1, DomainError, EmbeddedState, EvaluationError,
                      SwitchedSystem, Trajectory, check_transversality,
                      cubic_relay_system, eval_planar, sigmoid_cubic)
from slidelab.model import as_state_vector


class TestSwitchedSystem:
    def test_cubic_relay_values(self):
        sys_ = cubic_relay_system()
        x = np.array([0.0])
        assert sys_.f_plus(x, 0.0)[0] == pytest.approx(1.3)
        assert sys_.f_minus(x, 0.0)[0] == pytest.approx(-0.7)
        assert sys_.g_plus(x, 0.0) == pytest.approx(-1.5)
        assert sys_.g_minus(x, 0.0) == pytest.approx(0.5)
        assert sys_.k == 1 and sys_.M == 2.0

    def test_invalid_dimensions(self):
        with pytest.raises(DomainError):
            SwitchedSystem(f=lambda x, y, u: x, g=lambda x, y, u: 0.0, k=0)
        with pytest.raises(DomainError):
            SwitchedSystem(f=lambda x, y, u: x, g=lambda x, y, u: 0.0, M=0.0)

    def test_as_state_vector(self):
        assert as_state_vector(0.5, 1).shape == (1,)
        assert np.allclose(as_state_vector([1.0, 2.0], 2), [1.0, 2.0])
        with pytest.raises(DomainError):
            as_state_vector([1.0, 2.0], 1)


class TestEvalPlanar:
    def test_checks_finiteness(self):
        bad = SwitchedSystem(f=lambda x, y, u: np.array([math.inf]),
                             g=lambda x, y, u: 0.0)
        with pytest.raises(EvaluationError, match="component 0"):
            eval_planar(bad, [0.0], 0.0, 1.0)
        bad_g = SwitchedSystem(f=lambda x, y, u: np.array([0.0]),
                               g=lambda x, y, u: math.nan)
        with pytest.raises(EvaluationError, match="g is non-finite"):
            eval_planar(bad_g, [0.0], 0.0, 1.0)

    def test_happy_path(self):
        dx, dy = eval_planar(cubic_relay_system(), [0.0], 0.0, -1.0)
        assert dx[0] == pytest.approx(-0.7)
        assert dy == pytest.approx(0.5)


class TestTransversality:
    def test_cubic_relay_ok(self):
        rep = check_transversality(cubic_relay_system(), np.linspace(-1, 1, 5))
        assert rep.ok
        assert rep.g_plus_worst < 0 < rep.g_minus_worst
        assert rep.dg_du_worst < 0
        assert rep.failures == ()

    def test_sign_failure_reported_not_raised(self):
        # g has the wrong sign at u = +1: not attracting from above.
        sys_ = SwitchedSystem(f=lambda x, y, u: np.array([0.0]),
                              g=lambda x, y, u: 0.5 - u * 0.1)
        rep = check_transversality(sys_, [np.array([0.0])])
        assert not rep.ok
        assert any(kind == "sign" for _, kind, *_ in rep.failures)


class TestSigmoid:
    def test_saturation_and_core(self):
        sg = sigmoid_cubic()
        assert sg.value(2.0) == 1.0
        assert sg.value(-2.0) == -1.0
        assert sg.value(0.0) == 0.0
        assert sg.value(1.0) == 1.0
        assert sg.derivative(0.0) == pytest.approx(1.5)
        assert sg.derivative(1.5) == 0.0

    def test_inverse_round_trip(self):
        sg = sigmoid_cubic()
        for u in (-0.9, -0.5, 0.0, 0.3, 0.99):
            assert sg.value(sg.inverse(u)) == pytest.approx(u, abs=1e-12)

    def test_inverse_domain(self):
        with pytest.raises(DomainError):
            sigmoid_cubic().inverse(1.0)


class TestEmbeddedState:
    def test_overshoot_bound(self):
        EmbeddedState(np.array([0.0]), 0.0, 1.0 + DELTA1)
        with pytest.raises(DomainError):
            EmbeddedState(np.array([0.0]), 0.0, 1.0 + DELTA1 + 1e-9)


class TestTrajectory:
    def test_dense_output_reproduces_nodes(self):
        traj = Trajectory(1)
        for t in np.linspace(0.0, 1.0, 11):
            traj.add_node(t, [math.sin(t)], [math.cos(t)])
        for t in traj.times:
            assert traj.sample(t)[0] == pytest.approx(math.sin(t), abs=1e-15)
        # interpolation of a smooth function is accurate between nodes too
        assert traj.sample(0.55)[0] == pytest.approx(math.sin(0.55), abs=1e-6)

    def test_times_strictly_increasing(self):
        traj = Trajectory(1)
        traj.add_node(0.0, [0.0], [1.0])
        traj.add_node(1.0, [1.0], [1.0])
        with pytest.raises(DomainError):
            traj.add_node(0.5, [0.5], [1.0])

    def test_repeated_time_refreshes_derivative(self):
        # A switching instant: same state, new outgoing slope.
        traj = Trajectory(1)
        traj.add_node(0.0, [0.0], [1.0])
        traj.add_node(1.0, [1.0], [1.0])
        traj.add_node(1.0, [1.0], [-1.0])
        traj.add_node(2.0, [0.0], [-1.0])
        assert len(traj) == 3
        assert traj.sample(1.5)[0] == pytest.approx(0.5)

    def test_sample_outside_domain(self):
        traj = Trajectory(1)
        traj.add_node(0.0, [0.0], [0.0])
        traj.add_node(1.0, [0.0], [0.0])
        with pytest.raises(DomainError):
            traj.sample(1.5)

    def test_sample_x_projection(self):
        traj = Trajectory(2)
        traj.x_dim = 1
        traj.add_node(0.0, [1.0, 2.0], [0.0, 0.0])
        traj.add_node(1.0, [1.0, 2.0], [0.0, 0.0])
        assert traj.sample_x(0.5).shape == (1,)
        assert traj.sample_x(0.5)[0] == pytest.approx(1.0)
