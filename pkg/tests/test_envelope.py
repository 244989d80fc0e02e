"""Tests for the value function, the envelope formula and continuity scans"""

import math

import numpy as np
import pytest

from octool.builtins import constant_drift, lq_initial, steering, steering_plane
from octool.errors import ConfigurationError, UnsupportedProblemError
from octool.envelope import (AnalyticFamily, ShootingFamily, adjoint_continuity_scan, envelope_context,
                             envelope_directional, envelope_gradient, frechet_continuity_check,
                             integral_functional, integral_functional_differential, integral_functional_fd,
                             multiplier_continuity_scan, shell_parameters, value, value_fd_oracle)
from octool.piecewise import Grid, PiecewiseFn
from octool.problem import BolzaProblem

RADII = (1e-1, 1e-2, 1e-3)


class TestValue:
    """Test V[pi] through solution families"""

    def test_steering_value(self, steering_problem):
        """Test V = -(pi - xi0)^2 / (2T)"""
        family = AnalyticFamily(steering_problem)
        assert value(steering_problem, family, [1.0]) == pytest.approx(-0.5, abs=1e-12)
        assert value(steering_problem, family, [3.0]) == pytest.approx(-4.5, abs=1e-10)

    def test_family_without_exact_solution(self):
        """Test that the analytic family needs a provider"""
        P = BolzaProblem(n=1, mu=1, n_params=0, T=1.0, xi0=np.array([0.0]),
                         f0=lambda t, x, u, pi: 0.0, f=lambda t, x, u, pi: np.array([u[0]]))
        with pytest.raises(ConfigurationError):
            AnalyticFamily(P)

    def test_shooting_family_caches(self, lq_problem):
        """Test that repeated parameters reuse the shooting result"""
        family = ShootingFamily(lq_problem, [0.0])
        assert family.shoot(np.array([0.0])) is family.shoot(np.array([0.0]))
        assert family.shoot(np.array([0.0])) is family.warm_start()


class TestEnvelope:
    """Test the envelope directional derivative"""

    def test_steering_terms(self, steering_problem):
        """Test that only the equality term contributes for steering"""
        report = envelope_directional(steering_problem, AnalyticFamily(steering_problem), [1.0], [1.0])
        assert report.terms["Th"] == pytest.approx(-1.0)
        for name in ("Tg0", "Tg", "Tf0", "Tf"):
            assert report.terms[name] == pytest.approx(0.0, abs=1e-12)
        assert report.total == pytest.approx(-1.0)
        assert report.fd_status == "ok"
        assert report.fd_error == pytest.approx(0.5e-4, abs=1e-8)
        assert report.fd_central_error <= 1e-8

    def test_steering_gradient_with_offset_start(self):
        """Test DV = -(pi - xi0) / T with xi0 = 0.25, T = 2"""
        P = steering(xi0=0.25, T=2.0)
        gradient = envelope_gradient(P, AnalyticFamily(P), [1.5])
        assert gradient.tolist() == pytest.approx([-0.625])

    def test_directional_is_linear(self, steering_problem):
        """Test that scaling the direction scales the derivative"""
        family = AnalyticFamily(steering_problem)
        context = envelope_context(steering_problem, family, [2.0])
        one = envelope_directional(steering_problem, family, None, [1.0], context, fd_step=None).total
        three = envelope_directional(steering_problem, family, None, [-3.0], context, fd_step=None).total
        assert three == pytest.approx(-3.0 * one)
        assert one == pytest.approx(-2.0)

    def test_dynamics_term(self):
        """Test the adjoint-weighted parameter Jacobian for x' = pi"""
        P = constant_drift()
        report = envelope_directional(P, AnalyticFamily(P), [1.0], [1.0])
        assert report.terms["Tf"] == pytest.approx(1.0, abs=1e-10)
        assert report.total == pytest.approx(1.0, abs=1e-10)
        assert report.fd_value == pytest.approx(1.0, abs=1e-8)

    def test_lq_against_finite_difference(self, lq_problem):
        """Test the running-reward term against -tanh(1)"""
        report = envelope_directional(lq_problem, AnalyticFamily(lq_problem), [0.0], [1.0])
        assert report.terms["Tf0"] == pytest.approx(-math.tanh(1.0), abs=1e-9)
        assert report.total == pytest.approx(report.fd_central, abs=1e-6)
        assert report.fd_error <= 1e-4

    def test_lq_through_shooting(self, lq_problem):
        """Test the envelope formula on a shooting-computed family"""
        family = ShootingFamily(lq_problem, [0.0])
        report = envelope_directional(lq_problem, family, [0.0], [1.0])
        assert report.total == pytest.approx(-math.tanh(1.0), abs=1e-6)
        assert report.fd_central_error <= 1e-5
        assert report.fd_error <= 1e-3

    def test_direction_arity(self, steering_problem):
        """Test that the direction must have param_dim entries"""
        with pytest.raises(ConfigurationError):
            envelope_directional(steering_problem, AnalyticFamily(steering_problem), [1.0], [1.0, 0.0])

    def test_forward_difference(self, steering_problem):
        """Test the forward value difference along a quadratic value, V = -pi^2 / 2"""
        report = envelope_directional(steering_problem, AnalyticFamily(steering_problem), [2.0], [1.0],
                                      fd_step=1e-3)
        assert report.fd_value == pytest.approx(-2.0 - 0.5e-3, abs=1e-9)
        assert report.fd_central == pytest.approx(-2.0, abs=1e-9)

    def test_failing_provider_is_reported(self, steering_problem):
        """Test that a provider error away from pi0 shows up in fd_status"""
        def provider(pi):
            if pi[0] != 1.0:
                raise UnsupportedProblemError("no solution off the base parameter")
            return steering_problem.exact_solution(pi)

        report = envelope_directional(steering_problem, AnalyticFamily(steering_problem, provider), [1.0], [1.0])
        assert report.total == pytest.approx(-1.0)
        assert report.fd_status.startswith("failed")
        assert "no solution off the base parameter" in report.fd_status
        assert report.fd_value is None
        assert report.fd_central is None
        assert report.to_dict()['fd_status'] == report.fd_status

    def test_failing_lower_side_keeps_forward(self, steering_problem):
        """Test that only the central difference is lost when pi0 - h fails"""
        def provider(pi):
            if pi[0] < 1.0:
                raise UnsupportedProblemError("below range")
            return steering_problem.exact_solution(pi)

        report = envelope_directional(steering_problem, AnalyticFamily(steering_problem, provider), [1.0], [1.0])
        assert report.fd_value == pytest.approx(-1.0, abs=1e-4)
        assert report.fd_central is None
        assert report.fd_status.startswith("central failed")

    def test_fd_not_requested(self, steering_problem):
        """Test the status without a step"""
        report = envelope_directional(steering_problem, AnalyticFamily(steering_problem), [1.0], [1.0], fd_step=None)
        assert report.fd_status == "not requested"
        assert report.fd_value is None

    def test_dependent_constraints_unsupported(self):
        """Test that non-unique multipliers stop the envelope formula"""
        base = steering()
        P = BolzaProblem(n=1, mu=1, n_params=1, T=1.0, xi0=np.array([0.0]), f0=base.f0, f=base.f,
                         h=(lambda x, pi: x[0] - pi[0], lambda x, pi: 2 * x[0] - 2 * pi[0]),
                         pi0=np.array([1.0]), exact_solution=base.exact_solution)
        with pytest.raises(UnsupportedProblemError):
            envelope_context(P, AnalyticFamily(P))


class TestFiniteDifferenceOracle:
    """Test the value difference table"""

    def test_steering_orders(self, steering_problem):
        """Test first-order forward and exact central differences of a quadratic value"""
        table = value_fd_oracle(steering_problem, AnalyticFamily(steering_problem), [1.0], [1.0],
                                reference=-1.0)
        assert [r.status for r in table.rows] == ["ok"] * 4
        for row in table.rows:
            assert row.forward == pytest.approx(-1.0 - row.h / 2, abs=1e-9)
            assert row.central == pytest.approx(-1.0, abs=1e-9)
        assert table.order == pytest.approx(1.0, abs=0.05)
        assert table.richardson == pytest.approx(-1.0, abs=1e-8)

    def test_without_reference(self, steering_problem):
        """Test that no errors or order are reported without a reference"""
        table = value_fd_oracle(steering_problem, AnalyticFamily(steering_problem), [1.0], [1.0], h_list=(1e-3,))
        assert table.rows[0].forward_error is None
        assert table.order is None


class TestIntegralFunctional:
    """Test F(x) = integral of f(t, x(t))"""

    def test_value(self):
        """Test F(t -> t) for f = sin"""
        x0 = PiecewiseFn.from_callable(1.0, lambda t: np.array([t]))
        assert integral_functional(lambda t, v: math.sin(v[0]), x0) == pytest.approx(1 - math.cos(1.0), abs=1e-10)

    def test_differential_matches_difference_quotient(self):
        """Test DF(x0) h against (F(x0 + theta h) - F(x0)) / theta on a step increment"""
        x0 = PiecewiseFn.from_callable(1.0, lambda t: np.array([t]))
        h = PiecewiseFn.piecewise_constant(Grid(1.0, (0.0, 0.5, 1.0)), [1.0, -2.0])
        f = lambda t, v: math.sin(v[0])
        exact = integral_functional_differential(lambda t, v: [math.cos(v[0])], x0, h)
        assert exact == pytest.approx(math.sin(0.5) - 2 * (math.sin(1.0) - math.sin(0.5)), abs=1e-10)
        assert integral_functional_fd(f, x0, h, 1e-4) == pytest.approx(exact, abs=1e-4)

    def test_zero_theta(self):
        """Test that theta = 0 is rejected"""
        x0 = PiecewiseFn.constant(Grid.trivial(1.0), [0.0])
        with pytest.raises(ValueError):
            integral_functional_fd(lambda t, v: v[0], x0, x0, 0.0)


class TestContinuityScans:
    """Test shell scans around pi0"""

    def test_shell_parameters(self):
        """Test radius ordering and seeded directions"""
        points = shell_parameters(np.array([1.0, 0.0]), (1e-3, 1e-1), directions=4, seed=3)
        assert [i for i, _ in points] == [0] * 4 + [1] * 4
        assert np.linalg.norm(points[0][1] - [1.0, 0.0]) == pytest.approx(1e-1)
        assert np.linalg.norm(points[-1][1] - [1.0, 0.0]) == pytest.approx(1e-3)
        again = shell_parameters(np.array([1.0, 0.0]), (1e-3, 1e-1), directions=4, seed=3)
        assert all(np.array_equal(a[1], b[1]) for a, b in zip(points, again))

    def test_multiplier_scan(self, steering_problem):
        """Test mu[pi] = pi - xi0 shrinking with the shell radius"""
        scan = multiplier_continuity_scan(steering_problem, AnalyticFamily(steering_problem), [1.0],
                                          radii=RADII, directions=2)
        assert scan.kind == "multipliers"
        assert [s.radius for s in scan.shells] == list(RADII)
        for shell in scan.shells:
            assert shell.status == "ok"
            assert shell.max_deviation == pytest.approx(shell.radius, rel=1e-6)
        assert scan.monotone

    def test_adjoint_scan(self, steering_problem):
        """Test sup |p[pi] - p[pi0]| and the secondary rows"""
        scan = adjoint_continuity_scan(steering_problem, AnalyticFamily(steering_problem), [1.0],
                                       radii=RADII, directions=2)
        assert scan.monotone
        assert scan.shells[-1].max_deviation == pytest.approx(1e-3, rel=1e-6)
        assert set(scan.secondary) == {"terminal", "psi1", "psi1_0", "bound"}
        assert scan.secondary["psi1"] == pytest.approx([0.0] * 3, abs=1e-12)

    def test_gradient_scan(self, steering_problem):
        """Test the gradient deviation and the linearization remainder"""
        scan = frechet_continuity_check(steering_problem, AnalyticFamily(steering_problem), [1.0],
                                        radii=RADII, directions=2)
        assert scan.monotone
        for shell, radius in zip(scan.shells, RADII):
            assert shell.max_deviation == pytest.approx(radius, rel=1e-6)
        assert scan.secondary["linearization"] == pytest.approx([r / 2 for r in RADII], rel=1e-4)

    def test_out_of_domain_samples(self):
        """Test that failing parameters mark the shell instead of aborting"""
        base = steering()

        def provider(pi):
            if abs(pi[0] - 1.0) > 1e-3:
                raise UnsupportedProblemError("outside the family")
            return base.exact_solution(pi)

        scan = multiplier_continuity_scan(base, AnalyticFamily(base, provider), [1.0],
                                          radii=(1e-2,), directions=4)
        statuses = {s.status for s in scan.shells[0].samples}
        assert "out-of-Q" in statuses
        assert scan.shells[0].status == "out-of-Q"

    def test_lq_adjoint_scan(self, lq_problem):
        """Test sup |p[pi] - p[pi0]| = tanh(1) |pi - pi0| on the LQ family"""
        scan = adjoint_continuity_scan(lq_problem, AnalyticFamily(lq_problem), [0.0], radii=RADII, directions=2)
        assert scan.monotone
        for shell, radius in zip(scan.shells, RADII):
            assert shell.status == "ok"
            assert shell.max_deviation == pytest.approx(math.tanh(1.0) * radius, rel=1e-6)

    def test_lq_gradient_scan(self, lq_problem):
        """Test DV[pi] = pi - (1 + pi) tanh(1), so the deviation is (1 - tanh(1)) |pi - pi0|"""
        scan = frechet_continuity_check(lq_problem, AnalyticFamily(lq_problem), [0.0], radii=RADII, directions=2)
        assert scan.monotone
        for shell, radius in zip(scan.shells, RADII):
            assert shell.max_deviation == pytest.approx((1.0 - math.tanh(1.0)) * radius, rel=1e-5)


class TestParameterFamilies:
    """Test builtins whose parameter moves the start or the target"""

    @pytest.mark.parametrize("pi", [-1.5, 0.5, 2.0])
    def test_initial_state_value(self, pi):
        """Test V = -pi^2 tanh(T) / 2 with x(0) = pi"""
        P = lq_initial()
        assert value(P, AnalyticFamily(P), [pi]) == pytest.approx(-0.5 * pi ** 2 * math.tanh(1.0), abs=1e-10)

    @pytest.mark.parametrize("pi", [-1.5, 0.5, 2.0])
    def test_initial_state_envelope_against_central_difference(self, pi):
        """Test dV = -pi tanh(T) against central value differences"""
        P = lq_initial()
        family = AnalyticFamily(P)
        report = envelope_directional(P, family, [pi], [1.0])
        assert report.total == pytest.approx(-pi * math.tanh(1.0), abs=1e-9)
        table = value_fd_oracle(P, family, [pi], [1.0], h_list=(1e-4, 1e-5), reference=report.total)
        for row in table.rows:
            assert row.status == "ok"
            assert row.central_error <= 1e-7
        assert report.fd_central_error <= 1e-7

    def test_initial_state_through_shooting(self):
        """Test the shooting family on the moved start"""
        P = lq_initial()
        report = envelope_directional(P, ShootingFamily(P, [1.0]), [1.0], [1.0])
        assert report.total == pytest.approx(-math.tanh(1.0), abs=1e-6)

    def test_plane_gradient(self):
        """Test DV = -(pi - xi0) / T for two target coordinates"""
        P = steering_plane(xi0=0.5, T=2.0)
        gradient = envelope_gradient(P, AnalyticFamily(P), [1.5, -0.5])
        assert gradient.tolist() == pytest.approx([-0.5, 0.5], abs=1e-10)

    def test_plane_directions_match_gradient(self):
        """Test the directional derivative against the gradient on seeded directions"""
        P = steering_plane()
        family = AnalyticFamily(P)
        context = envelope_context(P, family, [1.0, -0.5])
        gradient = envelope_gradient(P, family, None, context=context)
        rng = np.random.default_rng(11)
        for _ in range(10):
            d = rng.normal(size=2)
            total = envelope_directional(P, family, None, d, context, fd_step=None).total
            assert total == pytest.approx(float(gradient @ d), abs=1e-10)
            assert total == pytest.approx(-(1.0 * d[0] - 0.5 * d[1]), abs=1e-10)

    def test_plane_multiplier_scan(self):
        """Test mu[pi] = pi - xi0 on two-dimensional shells"""
        P = steering_plane()
        scan = multiplier_continuity_scan(P, AnalyticFamily(P), [1.0, -0.5], radii=RADII, directions=3)
        assert scan.monotone
        scale = np.linalg.norm([1.0, -0.5])
        for shell, radius in zip(scan.shells, RADII):
            assert shell.max_deviation == pytest.approx(radius * scale, rel=1e-6)
