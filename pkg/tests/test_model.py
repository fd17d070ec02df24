"""Domain types: constructor invariants and scenario validation."""

import math

import numpy as np
import pytest

from safesmc.errors import InvalidParameters, SingularMatrix
from safesmc.model import (
    ChannelRule,
    ControllerState,
    LinearAlpha,
    Mode,
    RegularFormPlant,
    SafeguardParams,
    SafetySpec,
    SlidingSpec,
    Switching,
    checked_inverse,
    validate_scenario,
)
from safesmc.robot import DiagonalChannelRule, DiskObstacle, RobotTruth, obstacle_safety, robot_plant

from scenarios import params, robot


def _problems(sc, x0=(7.0, 7.0)):
    return validate_scenario(sc.plant, sc.sliding, sc.safety, sc.params, np.array(x0))


class TestSafeguardParams:
    def test_case_study_parameters_are_valid(self):
        p = params()
        assert p.h1 > 0.5 * math.pi * p.h2

    def test_h1_below_pi_half_h2_rejected(self):
        with pytest.raises(InvalidParameters, match="h1 > \\(pi/2\\)\\*h2"):
            params(h1=0.3, h2=0.2)

    def test_boundary_h1_equal_pi_half_h2_rejected(self):
        with pytest.raises(InvalidParameters):
            params(h1=0.5 * math.pi * 0.2, h2=0.2)

    @pytest.mark.parametrize("field", ["h1", "h2", "h3", "c_z", "lam"])
    def test_nonpositive_gains_rejected(self, field):
        with pytest.raises(InvalidParameters, match=field):
            params(**{field: 0.0})

    def test_nonfinite_z0_rejected(self):
        with pytest.raises(InvalidParameters, match="z0"):
            params(z0=math.nan)

    def test_reset_threshold_must_be_positive(self):
        with pytest.raises(InvalidParameters, match="z_reset_threshold"):
            params(z_reset_threshold=0.0)

    def test_fixed_channel_must_be_one_based(self):
        with pytest.raises(InvalidParameters, match="1-based"):
            params(channel_rule=ChannelRule.fixed(0))

    def test_upsilon_bounds(self):
        lo, hi = params().upsilon_bounds
        assert lo == pytest.approx(1 - 0.1 * math.pi)
        assert hi == pytest.approx(1 + 0.1 * math.pi)


class TestSlidingSpec:
    def test_identity_default(self):
        sl = SlidingSpec(p=2, beta0=0.1)
        assert sl.M_is_identity
        np.testing.assert_array_equal(sl.M_inv, np.eye(2))

    def test_singular_manifold_reported(self):
        sl = SlidingSpec(p=2, beta0=0.1, M=np.array([[1.0, 2.0], [0.0, 0.0]]))
        assert any("nonsingular" in msg for msg in sl.problems())
        with pytest.raises(SingularMatrix):
            sl.M_inv

    def test_beta0_and_epsilon_checked(self):
        assert SlidingSpec(p=2, beta0=0.0).problems()
        assert SlidingSpec(p=2, beta0=0.1, switching=Switching.sat(0.0)).problems()
        assert not SlidingSpec(p=2, beta0=0.1, switching=Switching.sat(0.5)).problems()


class TestSafetySpec:
    def test_linear_alpha(self):
        a = LinearAlpha(10.0)
        assert a(0.0) == 0.0 and a(0.3) == pytest.approx(3.0)

    def test_non_class_k_alpha_rejected(self):
        sp = obstacle_safety()
        bad = SafetySpec(h=sp.h, grad_h=sp.grad_h, h_bar=1.0, omega_radius=3.83, alpha=lambda r: r * r)
        assert any("increasing" in msg for msg in bad.problems())
        shifted = SafetySpec(h=sp.h, grad_h=sp.grad_h, h_bar=1.0, omega_radius=3.83, alpha=lambda r: r + 1)
        assert any("alpha(0)" in msg for msg in shifted.problems())

    def test_obstacle_geometry(self):
        obs = DiskObstacle((5.0, 3.0), 2.0)
        assert obs.h(np.array([7.0, 7.0])) == 16.0
        np.testing.assert_array_equal(obs.grad(np.array([7.0, 7.0])), [4.0, 8.0])
        assert obs.clearance() == pytest.approx(math.hypot(5, 3) - 2)


class TestPlant:
    def test_robot_bounds(self):
        pl = robot_plant()
        assert (pl.rho1, pl.rho2, pl.rho) == (4.0, 0.5, 8.0)
        assert pl.unit_gain and pl.m == 0

    def test_truth_within_bounds(self):
        truth = RobotTruth()
        for t in np.linspace(0, 10, 101):
            x = np.array([t, -t])
            assert np.all(truth.gain(t, x) >= 0.5)
            assert np.max(np.abs(truth.disturbance(t, x))) <= 4.0
            assert np.max(np.abs(truth.gain(t, x) - 1.0)) <= 0.5

    def test_checked_inverse_rejects_singular(self):
        with pytest.raises(SingularMatrix):
            checked_inverse(np.zeros((2, 2)), "E")

    def test_singular_E_reported_by_validation(self):
        pl = robot_plant()
        bad = RegularFormPlant(n=2, p=2, f_b=None, E=np.zeros((2, 2)), G_hat=np.eye(2), g0=0.5, rho1=4.0,
                               rho2=0.5, rho=8.0, G_true=pl.G_true, delta_true=pl.delta_true)
        sc = robot()
        out = validate_scenario(bad, sc.sliding, sc.safety, sc.params, np.array([7.0, 7.0]))
        assert any("E(x0) must be nonsingular" in msg for msg in out)


class TestValidateScenario:
    def test_case_study_valid(self):
        assert _problems(robot()) == []

    def test_raw_mapping_reports_instead_of_raising(self):
        sc = robot()
        raw = dict(h1=0.3, h2=0.2, c_z=2.0, lam=1.0, z0=-10.0)
        out = validate_scenario(sc.plant, sc.sliding, sc.safety, raw, np.array([7.0, 7.0]))
        assert any("h1 > (pi/2)*h2" in msg for msg in out)

    def test_origin_must_be_safe(self):
        sc = robot(center=(0.0, 0.0), radius=1.0)
        assert any("origin" in msg for msg in _problems(sc))

    def test_x0_shape_checked(self):
        assert any("shape" in msg for msg in _problems(robot(), x0=(1.0, 2.0, 3.0)))

    def test_gain_below_g0_reported(self):
        sc = robot()
        pl = RegularFormPlant(n=2, p=2, f_b=None, E=np.eye(2), G_hat=np.eye(2), g0=0.5, rho1=4.0, rho2=0.5,
                              rho=8.0, G_true=lambda t, x: np.array([0.1, 1.0]), delta_true=sc.plant.delta_true)
        out = validate_scenario(pl, sc.sliding, sc.safety, sc.params, np.array([7.0, 7.0]))
        assert any("below g0" in msg for msg in out)

    def test_inputs_not_mutated(self):
        sc = robot()
        x0 = np.array([7.0, 7.0])
        before = (x0.copy(), sc.params, sc.sliding.M.copy())
        _problems(sc, x0)
        np.testing.assert_array_equal(x0, before[0])
        assert sc.params == before[1]
        np.testing.assert_array_equal(sc.sliding.M, before[2])


class TestChannelRule:
    def test_diagonal_rule(self):
        rule = DiagonalChannelRule(2.0)
        assert rule(np.array([7.0, 7.0])) == 2
        # 4.5 >= 7 - 2 is false, so the rule selects the first input
        assert rule(np.array([7.0, 4.5])) == 1
        assert rule(np.array([7.0, 5.0])) == 2


def test_controller_state_defaults():
    st = ControllerState(z=-10.0)
    assert st.mode is Mode.PRE and st.j is None and st.reset_count == 0 and st.t1 is None
