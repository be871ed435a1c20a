import numpy as np
import pytest

from slidelab import (DegenerateCrossingError, DomainError, IntegratorOptions,
                      SwitchedSystem, cubic_relay_system, filippov_field,
                      filippov_lambda, slide, sliding_field, utkin_control,
                      utkin_field)


@pytest.fixture
def relay():
    return cubic_relay_system()


class TestFilippov:
    def test_lambda_value(self, relay):
        # g- = 0.5, g+ = -1.5: lambda = 0.5 / 2 = 0.25
        assert filippov_lambda(relay, [0.0]) == pytest.approx(0.25, abs=1e-12)

    def test_field_value(self, relay):
        assert filippov_field(relay, [0.0])[0] == pytest.approx(-0.2, abs=1e-12)

    def test_lambda_annihilates_normal_rate(self, relay):
        lam = filippov_lambda(relay, [0.0])
        gp = relay.g_plus(np.array([0.0]), 0.0)
        gm = relay.g_minus(np.array([0.0]), 0.0)
        assert abs(lam * gp + (1 - lam) * gm) <= 1e-12

    def test_degenerate_crossing(self):
        sys_ = SwitchedSystem(f=lambda x, y, u: np.array([1.0]),
                              g=lambda x, y, u: -0.5)
        with pytest.raises(DegenerateCrossingError):
            filippov_lambda(sys_, [0.0])


class TestUtkin:
    def test_control_value(self, relay):
        # -0.5 - u = 0  =>  u = -0.5
        assert utkin_control(relay, [0.0]) == pytest.approx(-0.5, abs=1e-12)

    def test_field_value(self, relay):
        # f(0, 0, -0.5) = 0.3 + (-0.5)^3 = 0.175
        assert utkin_field(relay, [0.0])[0] == pytest.approx(0.175, abs=1e-12)

    def test_control_residual(self, relay):
        u = utkin_control(relay, [0.0])
        assert abs(float(relay.g(np.array([0.0]), 0.0, u))) <= 1e-12

    def test_endpoint_roots(self):
        low = SwitchedSystem(f=lambda x, y, u: np.array([0.0]),
                             g=lambda x, y, u: -1.0 - u)
        assert utkin_control(low, [0.0]) == -1.0

    def test_no_bracket(self):
        sys_ = SwitchedSystem(f=lambda x, y, u: np.array([0.0]),
                              g=lambda x, y, u: -2.0 - u)
        with pytest.raises(DomainError):
            utkin_control(sys_, [0.0])

    def test_disagrees_with_filippov_on_nonlinear_f(self, relay):
        # The hallmark of the benchmark: the two resolutions differ in sign.
        ff = filippov_field(relay, [0.0])[0]
        fu = utkin_field(relay, [0.0])[0]
        assert ff < 0 < fu


class TestSlide:
    def test_filippov_endpoint(self, relay):
        traj = slide(relay, "filippov", [0.0], 1.0)
        assert traj.states[-1][0] == pytest.approx(-0.2, abs=1e-8)
        assert traj.flags == []

    def test_utkin_endpoint(self, relay):
        traj = slide(relay, "utkin", [0.0], 1.0)
        assert traj.states[-1][0] == pytest.approx(0.175, abs=1e-8)

    def test_domain_exit_flagged(self):
        small = cubic_relay_system(M=0.1)
        traj = slide(small, "filippov", [0.0], 1.0)
        assert "domain-exit" in traj.flags
        # rate -0.2 reaches |x| = 0.1 at t = 0.5
        assert traj.t_end == pytest.approx(0.5, abs=1e-6)

    def test_sliding_exit_flagged(self):
        # g = -x - u: lambda = (1 - x)/2 hits 0 as x -> 1, U = -x hits -1.
        sys_ = SwitchedSystem(f=lambda x, y, u: np.array([1.0]),
                              g=lambda x, y, u: -x[0] - u, M=2.0)
        for kind in ("filippov", "utkin"):
            traj = slide(sys_, kind, [0.5], 1.0,
                         IntegratorOptions(rtol=1e-10, atol=1e-12))
            assert "sliding-exit" in traj.flags
            assert traj.states[-1][0] == pytest.approx(1.0, abs=1e-6)

    def test_bad_start(self, relay):
        with pytest.raises(DomainError):
            slide(relay, "filippov", [5.0], 1.0)
        with pytest.raises(DomainError):
            sliding_field(relay, "midpoint")
