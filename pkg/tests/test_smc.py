"""Inner sliding mode loop: sliding variable, switching functions, control law, reaching bound."""

import numpy as np
import pytest

from safesmc.model import SlidingSpec, Switching
from safesmc.robot import robot_plant
from safesmc.smc import reaching_time_bound, sat, sign, sliding_variable, switching_term, unsafe_control

import oracle
from scenarios import robot


class TestSlidingVariable:
    def test_identity_manifold(self):
        s = sliding_variable(SlidingSpec(p=2, beta0=0.1), np.zeros(0), np.array([7.0, 7.0]))
        np.testing.assert_array_equal(s, [7.0, 7.0])

    def test_rotated_manifold(self):
        sl = SlidingSpec(p=2, beta0=0.1, M=np.array([[1.0, -1.0], [1.0, 1.0]]))
        np.testing.assert_array_equal(sliding_variable(sl, np.zeros(0), np.array([0.0, 6.0])), [-6.0, 6.0])

    def test_on_manifold_is_zero(self):
        phi = lambda eta: np.array([2.0 * eta[0], -eta[0]])
        sl = SlidingSpec(p=2, beta0=0.1, M=np.array([[3.0, 1.0], [0.5, 2.0]]), phi=phi,
                         jac_phi=lambda eta: np.array([[2.0], [-1.0]]))
        eta = np.array([1.7])
        np.testing.assert_allclose(sliding_variable(sl, eta, phi(eta)), 0.0)


class TestSwitching:
    def test_sign(self):
        np.testing.assert_array_equal(sign(np.array([7.0, -2.0])), [1.0, -1.0])
        np.testing.assert_array_equal(sign(np.array([0.0])), [1.0])
        assert sign(0.0) == 1.0 and sign(-0.0) == 1.0

    def test_sat(self):
        np.testing.assert_allclose(sat(np.array([0.3, 2.0, -0.25]), 0.5), [0.6, 1.0, -0.5])
        assert sat(0.5, 0.5) == 1.0 and sat(-0.1, 0.5) == pytest.approx(-0.2)

    def test_switching_term_dispatch(self):
        s = np.array([0.1, -3.0])
        np.testing.assert_array_equal(switching_term(s, Switching.sign()), [1.0, -1.0])
        np.testing.assert_allclose(switching_term(s, Switching.sat(0.5)), [0.2, -1.0])


class TestUnsafeControl:
    def test_robot_at_77(self):
        sc = robot()
        out = unsafe_control(sc.plant, sc.sliding, np.array([7.0, 7.0]))
        np.testing.assert_allclose(out.u_smc, [-8.1, -8.1])
        assert out.beta == pytest.approx(oracle.RHO + oracle.BETA0)

    def test_zero_s_uses_sign_zero_convention(self):
        sc = robot()
        out = unsafe_control(sc.plant, sc.sliding, np.zeros(2))
        np.testing.assert_allclose(out.u_smc, [-8.1, -8.1])

    def test_rotated_manifold_control(self):
        # v = -0.1 sign([-6, 6]) = [0.1, -0.1]; M^-1 v = [0, -0.1], so that s' = M u = v
        sc = robot(M=[[1.0, -1.0], [1.0, 1.0]], uncertain=False)
        out = unsafe_control(sc.plant, sc.sliding, np.array([0.0, 6.0]))
        np.testing.assert_allclose(out.v, [0.1, -0.1])
        np.testing.assert_allclose(out.u_smc, [0.0, -0.1], atol=1e-15)
        np.testing.assert_allclose(sc.sliding.M @ out.u_smc, -0.1 * np.sign(out.s))

    def test_general_form_with_drift_and_gain(self):
        # zeta' = f_b + G_hat E u with non-identity E and G_hat, m = 1
        from safesmc.model import RegularFormPlant

        E = np.array([[2.0, 0.0], [1.0, 1.0]])
        Gh = np.diag([1.5, 0.5])
        f_b = lambda eta, zeta: np.array([zeta[0] * eta[0], 1.0])
        f_a = lambda eta, zeta: np.array([zeta[1]])
        jac = lambda eta: np.array([[1.0], [0.0]])
        phi = lambda eta: np.array([eta[0], 0.0])
        pl = RegularFormPlant(n=3, p=2, f_b=f_b, E=E, G_hat=Gh, g0=0.5, rho1=1.0, rho2=0.1, rho=2.0,
                              G_true=lambda t, x: np.array([1.5, 0.5]), delta_true=lambda t, x: np.zeros(2), f_a=f_a)
        sl = SlidingSpec(p=2, beta0=0.1, phi=phi, jac_phi=jac)
        x = np.array([0.5, 2.0, -1.0])
        out = unsafe_control(pl, sl, x)
        eta, zeta = x[:1], x[1:]
        fb_eff = f_b(eta, zeta) - jac(eta) @ f_a(eta, zeta)
        expected = np.linalg.solve(E, -np.linalg.solve(Gh, fb_eff) + out.v)
        np.testing.assert_allclose(out.u_smc, expected)
        # nominal closed loop: s' = f_b - J f_a + G_hat E u = G_hat v, drift cancelled
        np.testing.assert_allclose(fb_eff + Gh @ E @ out.u_smc, Gh @ out.v)


class TestReachingBound:
    def test_case_study(self):
        b = reaching_time_bound([7.0, 7.0], -10.0, g0=0.5, beta0=0.1, lam=1.0, c_z=2.0)
        assert b == oracle.FROZEN["reach_bound"]
        assert b == pytest.approx(217.3, abs=0.05)

    def test_zero_state(self):
        assert reaching_time_bound([0.0, 0.0], 0.0, 0.5, 0.1, 1.0, 2.0) == 0.0

    def test_smaller_rate_selected(self):
        # g0 beta0 = 1 and lam / sqrt(c_z) = 2, so mu = 1 and the bound is sqrt(25) = 5
        assert reaching_time_bound([3.0, 4.0], 0.0, g0=1.0, beta0=1.0, lam=2.0 * np.sqrt(2.0), c_z=2.0) == pytest.approx(5.0)


def test_plant_default_name():
    assert robot_plant().name == "robot"
