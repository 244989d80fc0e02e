"""Tests for problem data, processes and the Mayer augmentation"""

import math

import numpy as np
import pytest

from octool.errors import ConfigurationError, DomainError
from octool.piecewise import Grid, PiecewiseC1Fn, PiecewiseFn
from octool.problem import (BolzaProblem, ControlBox, DerivMode, Hamiltonian, Process, augment_to_mayer,
                            criterion, hamiltonian_eval, lift_process, validate_process)

LQ_VALUE = -0.5 * math.tanh(1.0)


def _drift_problem(**overrides):
    """x' = u with callbacks only; derivatives come from central differences"""
    data = dict(n=1, mu=1, n_params=0, T=1.0, xi0=np.array([0.0]),
                f0=lambda t, x, u, pi: -0.5 * u[0] ** 2,
                f=lambda t, x, u, pi: np.array([u[0]]))
    data.update(overrides)
    return BolzaProblem(**data)


class TestControlBox:
    """Test the box description of U"""

    def test_open_by_default(self):
        """Test that no configuration means an unbounded open box"""
        box = ControlBox.from_config(None, 2)
        assert box.open
        assert not box.bounded
        assert box.contains([1e6, -1e6])

    def test_bounds_and_clip(self):
        """Test membership, clipping and the center"""
        box = ControlBox.from_config({'lower': [-1.0], 'upper': [3.0]}, 1)
        assert box.contains([2.0])
        assert not box.contains([4.0])
        assert box.clip([5.0])[0] == 3.0
        assert box.center()[0] == 1.0

    def test_unknown_key(self):
        """Test that unknown box keys are rejected"""
        with pytest.raises(ConfigurationError):
            ControlBox.from_config({'low': [0.0]}, 1)

    def test_inverted_bounds(self):
        """Test that lower above upper is rejected"""
        with pytest.raises(ConfigurationError):
            ControlBox.from_config({'lower': [1.0], 'upper': [0.0]}, 1)

    def test_arity(self):
        """Test that bounds need control_dim entries"""
        with pytest.raises(ConfigurationError):
            ControlBox.from_config({'lower': [0.0, 1.0]}, 1)


class TestBolzaProblem:
    """Test construction and the dimension check"""

    def test_missing_derivatives_fall_back_to_fd(self):
        """Test that analytic mode without callbacks becomes central-FD"""
        P = _drift_problem()
        assert P.deriv_mode == DerivMode.CENTRAL_FD
        assert np.allclose(P.control_jacobian(0.0, [0.0], [1.0], []), np.ones((1, 1)), atol=1e-8)
        assert P.derivs.f0_u(0.0, np.zeros(1), np.array([2.0]), np.zeros(0))[0] == pytest.approx(-2.0, abs=1e-6)

    def test_dual_ad_requires_expressions(self):
        """Test that dual-AD mode without derivative callbacks is a configuration error"""
        with pytest.raises(ConfigurationError):
            _drift_problem(deriv_mode=DerivMode.DUAL_AD)

    def test_wrong_dynamics_shape(self):
        """Test that the dimension check catches a dynamics callback of the wrong size"""
        with pytest.raises(ConfigurationError):
            _drift_problem(f=lambda t, x, u, pi: np.array([u[0], 0.0]))

    def test_invalid_dimensions(self):
        """Test that a zero state dimension is rejected"""
        with pytest.raises(ConfigurationError):
            _drift_problem(n=0)

    def test_empty_terminal_reward(self):
        """Test that an empty g list means zero terminal reward"""
        P = _drift_problem()
        assert P.m == 0
        g, h = P.terminal_values(np.array([5.0]), np.zeros(0))
        assert g.tolist() == [0.0]
        assert h.size == 0

    def test_params_default_and_arity(self, steering_problem):
        """Test pi defaults to pi0 and is size-checked"""
        assert steering_problem.params().tolist() == [1.0]
        with pytest.raises(DomainError):
            steering_problem.params([1.0, 2.0])


class TestHamiltonian:
    """Test H = lambda0 f0 + p . f"""

    def test_value_and_gradients(self, steering_problem):
        """Test H and its control gradient on steering"""
        H = Hamiltonian(steering_problem, 1.0)
        args = (0.5, np.array([0.2]), np.array([1.0]), np.array([1.0]), np.array([1.0]))
        assert H.value(*args) == pytest.approx(0.5)
        assert hamiltonian_eval(H, *args) == H.value(*args)
        assert H.grad_u(*args)[0] == pytest.approx(0.0)
        assert H.grad_x(*args)[0] == pytest.approx(0.0)
        assert H.partial_t(*args) == pytest.approx(0.0)

    def test_abnormal_hamiltonian(self, lq_problem):
        """Test that lambda0 = 0 drops the running reward"""
        H = Hamiltonian(lq_problem, 0.0)
        assert H.value(0.0, np.array([1.0]), np.array([2.0]), np.array([3.0]), np.array([0.0])) == pytest.approx(6.0)


class TestProcess:
    """Test feasibility and the criterion"""

    def test_steering_optimum_is_feasible(self, steering_problem, steering_process):
        """Test the exact steering process against dynamics and constraint"""
        report = validate_process(steering_problem, steering_process)
        assert report.feasible
        assert report.equality_violations[0] == pytest.approx(0.0, abs=1e-12)

    def test_steering_criterion(self, steering_problem, steering_process):
        """Test the value -(pi - xi0)^2 / (2T)"""
        assert criterion(steering_problem, steering_process) == pytest.approx(-0.5, abs=1e-10)

    def test_lq_criterion(self, lq_problem, lq_process):
        """Test the Riccati value -tanh(1)/2"""
        assert criterion(lq_problem, lq_process) == pytest.approx(LQ_VALUE, abs=1e-9)

    def test_infeasible_dynamics(self, steering_problem):
        """Test that a state inconsistent with the control is reported"""
        grid = Grid.trivial(1.0)
        x = PiecewiseC1Fn(grid, [lambda t: np.array([t])], [lambda t: np.array([1.0])])
        proc = Process(x, PiecewiseFn.constant(grid, [2.0]), np.array([1.0]))
        report = validate_process(steering_problem, proc)
        assert not report.feasible
        assert report.dynamics_residual == pytest.approx(1.0)

    def test_dimension_mismatch(self, steering_problem):
        """Test that a process of the wrong state dimension raises"""
        grid = Grid.trivial(1.0)
        x = PiecewiseC1Fn(grid, [lambda t: np.zeros(2)], [lambda t: np.zeros(2)])
        proc = Process(x, PiecewiseFn.constant(grid, [0.0]), np.array([1.0]))
        with pytest.raises(DomainError):
            criterion(steering_problem, proc)


class TestMayer:
    """Test the lift to a Mayer problem"""

    def test_augmented_dimensions(self, lq_problem):
        """Test that sigma is prepended to the state"""
        mayer = augment_to_mayer(lq_problem)
        assert mayer.n == 2
        assert mayer.xi0.tolist() == [0.0, 1.0]
        assert mayer.running(0.0, np.zeros(2), np.ones(1), np.zeros(1)) == 0.0

    def test_value_parity(self, lq_problem, lq_process):
        """Test that the lifted process has the same criterion"""
        mayer = augment_to_mayer(lq_problem)
        lifted = lift_process(lq_problem, lq_process)
        assert validate_process(mayer, lifted).feasible
        assert criterion(mayer, lifted) == pytest.approx(criterion(lq_problem, lq_process), abs=1e-8)
        assert lifted.x.eval(1.0)[0] == pytest.approx(LQ_VALUE, abs=1e-8)

    def test_sigma_gradient(self, steering_problem):
        """Test D1 G0 = (1, D1 g0)"""
        mayer = augment_to_mayer(steering_problem)
        gx, hx = mayer.terminal_gradients(np.array([0.0, 1.0]), np.array([1.0]))
        assert gx[0].tolist() == [1.0, 0.0]
        assert hx[0].tolist() == [0.0, 1.0]
        assert math.isclose(mayer.T, steering_problem.T)
