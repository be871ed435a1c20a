import math

import numpy as np
import pytest

from slidelab import (DomainError, Face, IntegratorOptions, RegionSpec,
                      SwitchedSystem, annulus_region, block_region,
                      convergence_study, cubic_relay_system, isochrone,
                      region_check, run_hysteresis, sigmoid_cubic, slide,
                      slow_curve_Q, sup_error)


@pytest.fixture
def relay():
    return cubic_relay_system()


class TestSupError:
    def test_against_callable(self, relay):
        traj = slide(relay, "filippov", [0.0], 1.0)
        err = sup_error(traj, lambda t: np.array([-0.2 * t]))
        assert err < 1e-7

    def test_against_trajectory(self, relay):
        a = run_hysteresis(relay, [0.0], -0.05, -1, 0.05, 1.0)
        ref = slide(relay, "filippov", [0.0], 1.0)
        err = sup_error(a, ref)
        assert 0 < err < 0.2  # O(alpha) but nonzero

    def test_window(self, relay):
        traj = slide(relay, "filippov", [0.0], 1.0)
        err = sup_error(traj, lambda t: np.array([-0.2 * t]),
                        window=(0.5, 0.75))
        assert err < 1e-7
        with pytest.raises(DomainError):
            sup_error(traj, lambda t: np.array([0.0]), window=(0.9, 0.2))


class TestConvergence:
    def test_hysteresis_first_order(self, relay):
        rep = convergence_study(relay, "hysteresis", [0.0], 1.0,
                                [0.1, 0.05, 0.025, 0.0125])
        assert 0.85 <= rep.fitted_order <= 1.15
        assert rep.r_squared >= 0.98
        assert rep.flags == ()

    def test_smoothing_first_order(self, relay):
        rep = convergence_study(relay, "smoothing", [0.0], 1.0,
                                [0.1, 0.05, 0.025, 0.0125])
        assert 0.85 <= rep.fitted_order <= 1.15
        assert rep.correction == "none"

    def test_needs_four_alphas(self, relay):
        with pytest.raises(DomainError):
            convergence_study(relay, "hysteresis", [0.0], 1.0, [0.1, 0.05])
        with pytest.raises(DomainError):
            convergence_study(relay, "sorcery", [0.0], 1.0,
                              [0.1, 0.05, 0.025, 0.0125])


class TestIsochrone:
    def test_relay_pseudoequilibrium_level(self, relay):
        a = 0.1
        pts = isochrone(relay, a, [-0.5, 0.0, 0.5])
        for p in pts:
            assert p.ok
            # constant rates make the equal-time level exactly alpha/2
            assert p.y_p == pytest.approx(a / 2, abs=1e-8)

    def test_requires_positive_alpha(self, relay):
        with pytest.raises(DomainError):
            isochrone(relay, -0.1, [0.0])


class TestSlowCurve:
    def test_relay_value(self, relay):
        # u = -0.5, y = eps * phi^{-1}(u) - alpha * u
        pts = slow_curve_Q(relay, -0.1, 0.01, [0.0])
        p = pts[0]
        assert p.ok
        assert p.u == pytest.approx(-0.5, abs=1e-10)
        expected = 0.01 * sigmoid_cubic().inverse(-0.5) - (-0.1) * (-0.5)
        assert p.y == pytest.approx(expected, abs=1e-10)
        assert p.y == pytest.approx(-0.0534730, abs=1e-6)

    def test_rail_root_marked_not_ok(self):
        sys_ = SwitchedSystem(f=lambda x, y, u: np.array([0.0]),
                              g=lambda x, y, u: -1.0 - u)
        pts = slow_curve_Q(sys_, 0.1, 0.01, [0.0])
        assert not pts[0].ok
        assert math.isnan(pts[0].y)


class TestRegions:
    def test_annulus_invariant(self, relay):
        spec = annulus_region(relay, 1e-2, 0.1, 1e-3)
        assert region_check(relay, spec, n_samples=10) == []

    def test_block_invariant(self, relay):
        spec = block_region(relay, -1e-2, -0.05, 0.05)
        assert region_check(relay, spec, n_samples=10) == []

    def test_block_constants(self, relay):
        spec = block_region(relay, -1e-2, -0.05, 0.05)
        assert spec.params["u_star"] == pytest.approx(0.75, abs=1e-9)
        assert spec.params["G"] == pytest.approx(0.25, abs=1e-9)
        assert spec.params["sigma"] == pytest.approx(2.25, abs=1e-9)

    def test_block_hypotheses_enforced(self, relay):
        # kappa = 0.1 exceeds (1 - u*)/(2 sigma) ~ 0.0556 for this system
        with pytest.raises(DomainError):
            block_region(relay, -1e-2, -0.1, 0.05)
        with pytest.raises(DomainError):
            block_region(relay, 1e-2, -0.05, 0.05)

    def test_annulus_parameter_validation(self, relay):
        with pytest.raises(DomainError):
            annulus_region(relay, -1e-2, 0.1, 1e-3)
        with pytest.raises(DomainError):
            annulus_region(relay, 1e-2, 0.3, 1e-3)

    def test_outward_flow_is_reported(self):
        # A face whose field points along its outward normal must violate.
        face = Face("out", sample=lambda n: [np.array([0.0, 0.0, 1.0])] * n,
                    normal=lambda p: np.array([0.0, 0.0, 1.0]))
        spec = RegionSpec("block-B", {}, (face,),
                          lambda p: np.array([0.0, 0.0, 1.0]))
        violations = region_check(cubic_relay_system(), spec, n_samples=3)
        assert len(violations) == 3
        assert all(v.face == "out" and v.rate > 0 for v in violations)
