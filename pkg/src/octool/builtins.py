"""
Builtin problem registry

Each builtin ships analytic derivatives, the closed-form maximizer of its
Hamiltonian in the control, a nominal control for `simulate`, and the exact
optimal process where one is known.
"""

import inspect
import math
from typing import Callable, Dict

import numpy as np

from .errors import ConfigurationError, UnsupportedProblemError
from .piecewise import Grid, PiecewiseC1Fn, PiecewiseFn
from .problem import BolzaProblem, Derivatives, DerivMode, Process


def _quadratic_control_law(t, x, p, lambda0, pi):
    # argmax of lambda0 * (-|u|^2 / 2) + p . u
    if lambda0 <= 0:
        raise UnsupportedProblemError("Hamiltonian has no maximizer in the control for lambda0 <= 0")
    return np.asarray(p, dtype=float).reshape(-1) / lambda0


def steering(xi0: float = 0.0, T: float = 1.0) -> BolzaProblem:
    """
    Steer x' = u from xi0 to pi at least control effort

        f0 = -u^2 / 2,  h1 = x(T) - pi

    Optimal control (pi - xi0) / T, value -(pi - xi0)^2 / (2T).
    """
    def exact_solution(pi):
        pi = np.asarray(pi, dtype=float).reshape(-1)
        slope = (pi[0] - xi0) / T
        grid = Grid.trivial(T)
        x = PiecewiseC1Fn(grid, [lambda t: np.array([xi0 + slope * t])], [lambda t: np.array([slope])])
        return Process(x, PiecewiseFn.constant(grid, [slope]), pi)

    return BolzaProblem(
        n=1, mu=1, n_params=1, T=T, xi0=np.array([xi0]),
        f0=lambda t, x, u, pi: -0.5 * u[0] ** 2,
        f=lambda t, x, u, pi: np.array([u[0]]),
        g=(),
        h=(lambda x, pi: x[0] - pi[0],),
        derivs=Derivatives(
            f0_x=lambda t, x, u, pi: np.zeros(1),
            f_x=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_u=lambda t, x, u, pi: np.array([-u[0]]),
            f_u=lambda t, x, u, pi: np.ones((1, 1)),
            f0_p=lambda t, x, u, pi: np.zeros(1),
            f_p=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_t=lambda t, x, u, pi: 0.0,
            f_t=lambda t, x, u, pi: np.zeros(1),
            g_x=(lambda x, pi: np.zeros(1),),
            g_p=(lambda x, pi: np.zeros(1),),
            h_x=(lambda x, pi: np.ones(1),),
            h_p=(lambda x, pi: -np.ones(1),),
        ),
        deriv_mode=DerivMode.ANALYTIC,
        pi0=np.array([1.0]),
        name="steering",
        control_law=_quadratic_control_law,
        nominal_control=lambda t, pi: np.array([(pi[0] - xi0) / T]),
        exact_solution=exact_solution,
    )


def lq_scalar(xi0: float = 1.0, T: float = 1.0) -> BolzaProblem:
    """
    Scalar linear-quadratic regulator with a linear state reward

        x' = u,  f0 = -(x^2 + u^2) / 2 - pi * x

    With y = x + pi the optimum is y = (xi0 + pi) cosh(T - t) / cosh(T) and
    u = p = -(xi0 + pi) sinh(T - t) / cosh(T). At pi = 0 the value is
    -xi0^2 tanh(T) / 2.
    """
    def exact_solution(pi):
        pi = np.asarray(pi, dtype=float).reshape(-1)
        amp = (xi0 + pi[0]) / math.cosh(T)
        shift = pi[0]
        grid = Grid.trivial(T)
        x = PiecewiseC1Fn(grid,
                          [lambda t: np.array([amp * math.cosh(T - t) - shift])],
                          [lambda t: np.array([-amp * math.sinh(T - t)])])
        u = PiecewiseFn(grid, [lambda t: np.array([-amp * math.sinh(T - t)])])
        return Process(x, u, pi)

    return BolzaProblem(
        n=1, mu=1, n_params=1, T=T, xi0=np.array([xi0]),
        f0=lambda t, x, u, pi: -0.5 * (x[0] ** 2 + u[0] ** 2) - pi[0] * x[0],
        f=lambda t, x, u, pi: np.array([u[0]]),
        derivs=Derivatives(
            f0_x=lambda t, x, u, pi: np.array([-x[0] - pi[0]]),
            f_x=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_u=lambda t, x, u, pi: np.array([-u[0]]),
            f_u=lambda t, x, u, pi: np.ones((1, 1)),
            f0_p=lambda t, x, u, pi: np.array([-x[0]]),
            f_p=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_t=lambda t, x, u, pi: 0.0,
            f_t=lambda t, x, u, pi: np.zeros(1),
            g_x=(lambda x, pi: np.zeros(1),),
            g_p=(lambda x, pi: np.zeros(1),),
        ),
        deriv_mode=DerivMode.ANALYTIC,
        pi0=np.array([0.0]),
        name="lq_scalar",
        control_law=_quadratic_control_law,
        nominal_control=lambda t, pi: np.array([-(xi0 + pi[0]) * math.sinh(T - t) / math.cosh(T)]),
        exact_solution=exact_solution,
    )


def constant_drift(xi0: float = 0.0, T: float = 1.0) -> BolzaProblem:
    """x' = pi regardless of the control; reward x(T)"""
    def exact_solution(pi):
        pi = np.asarray(pi, dtype=float).reshape(-1)
        grid = Grid.trivial(T)
        x = PiecewiseC1Fn(grid, [lambda t: np.array([xi0 + pi[0] * t])], [lambda t: np.array([pi[0]])])
        return Process(x, PiecewiseFn.constant(grid, [0.0]), pi)

    return BolzaProblem(
        n=1, mu=1, n_params=1, T=T, xi0=np.array([xi0]),
        f0=lambda t, x, u, pi: 0.0,
        f=lambda t, x, u, pi: np.array([pi[0]]),
        g=(lambda x, pi: x[0],),
        derivs=Derivatives(
            f0_x=lambda t, x, u, pi: np.zeros(1),
            f_x=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_u=lambda t, x, u, pi: np.zeros(1),
            f_u=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_p=lambda t, x, u, pi: np.zeros(1),
            f_p=lambda t, x, u, pi: np.ones((1, 1)),
            f0_t=lambda t, x, u, pi: 0.0,
            f_t=lambda t, x, u, pi: np.zeros(1),
            g_x=(lambda x, pi: np.ones(1),),
            g_p=(lambda x, pi: np.zeros(1),),
        ),
        deriv_mode=DerivMode.ANALYTIC,
        pi0=np.array([1.0]),
        name="constant_drift",
        control_law=lambda t, x, p, lambda0, pi: np.zeros(1),
        nominal_control=lambda t, pi: np.zeros(1),
        exact_solution=exact_solution,
    )


def lq_initial(T: float = 1.0) -> BolzaProblem:
    """
    Linear-quadratic regulator started at the parameter, x(0) = pi

    Written in the shifted state y = x - pi so the start is fixed at zero:

        y' = u,  f0 = -((y + pi)^2 + u^2) / 2

    The optimum is x = pi cosh(T - t) / cosh(T), u = p = -pi sinh(T - t) / cosh(T)
    and the value is -pi^2 tanh(T) / 2.
    """
    def exact_solution(pi):
        pi = np.asarray(pi, dtype=float).reshape(-1)
        amp = pi[0] / math.cosh(T)
        grid = Grid.trivial(T)
        x = PiecewiseC1Fn(grid,
                          [lambda t: np.array([amp * math.cosh(T - t) - pi[0]])],
                          [lambda t: np.array([-amp * math.sinh(T - t)])])
        u = PiecewiseFn(grid, [lambda t: np.array([-amp * math.sinh(T - t)])])
        return Process(x, u, pi)

    return BolzaProblem(
        n=1, mu=1, n_params=1, T=T, xi0=np.zeros(1),
        f0=lambda t, x, u, pi: -0.5 * ((x[0] + pi[0]) ** 2 + u[0] ** 2),
        f=lambda t, x, u, pi: np.array([u[0]]),
        derivs=Derivatives(
            f0_x=lambda t, x, u, pi: np.array([-(x[0] + pi[0])]),
            f_x=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_u=lambda t, x, u, pi: np.array([-u[0]]),
            f_u=lambda t, x, u, pi: np.ones((1, 1)),
            f0_p=lambda t, x, u, pi: np.array([-(x[0] + pi[0])]),
            f_p=lambda t, x, u, pi: np.zeros((1, 1)),
            f0_t=lambda t, x, u, pi: 0.0,
            f_t=lambda t, x, u, pi: np.zeros(1),
            g_x=(lambda x, pi: np.zeros(1),),
            g_p=(lambda x, pi: np.zeros(1),),
        ),
        deriv_mode=DerivMode.ANALYTIC,
        pi0=np.array([1.0]),
        name="lq_initial",
        control_law=_quadratic_control_law,
        nominal_control=lambda t, pi: np.array([-pi[0] * math.sinh(T - t) / math.cosh(T)]),
        exact_solution=exact_solution,
    )


def steering_plane(xi0: float = 0.0, T: float = 1.0) -> BolzaProblem:
    """
    Steer x' = u in the plane from (xi0, xi0) to pi = (pi1, pi2)

        f0 = -|u|^2 / 2,  h_j = x_j(T) - pi_j

    Optimal control (pi - xi0) / T, value -|pi - xi0|^2 / (2T), gradient -(pi - xi0) / T.
    """
    start = np.full(2, float(xi0))

    def exact_solution(pi):
        pi = np.asarray(pi, dtype=float).reshape(-1)
        slope = (pi - start) / T
        grid = Grid.trivial(T)
        x = PiecewiseC1Fn(grid, [lambda t: start + slope * t], [lambda t: slope.copy()])
        return Process(x, PiecewiseFn.constant(grid, slope), pi)

    def unit(j):
        e = np.zeros(2)
        e[j] = 1.0
        return e

    return BolzaProblem(
        n=2, mu=2, n_params=2, T=T, xi0=start.copy(),
        f0=lambda t, x, u, pi: -0.5 * float(np.dot(u, u)),
        f=lambda t, x, u, pi: np.array([u[0], u[1]]),
        g=(),
        h=(lambda x, pi: x[0] - pi[0], lambda x, pi: x[1] - pi[1]),
        derivs=Derivatives(
            f0_x=lambda t, x, u, pi: np.zeros(2),
            f_x=lambda t, x, u, pi: np.zeros((2, 2)),
            f0_u=lambda t, x, u, pi: -np.array([u[0], u[1]]),
            f_u=lambda t, x, u, pi: np.eye(2),
            f0_p=lambda t, x, u, pi: np.zeros(2),
            f_p=lambda t, x, u, pi: np.zeros((2, 2)),
            f0_t=lambda t, x, u, pi: 0.0,
            f_t=lambda t, x, u, pi: np.zeros(2),
            g_x=(lambda x, pi: np.zeros(2),),
            g_p=(lambda x, pi: np.zeros(2),),
            h_x=(lambda x, pi: unit(0), lambda x, pi: unit(1)),
            h_p=(lambda x, pi: -unit(0), lambda x, pi: -unit(1)),
        ),
        deriv_mode=DerivMode.ANALYTIC,
        pi0=np.array([1.0, -0.5]),
        name="steering_plane",
        control_law=_quadratic_control_law,
        nominal_control=lambda t, pi: (np.asarray(pi, dtype=float) - start) / T,
        exact_solution=exact_solution,
    )


BUILTINS: Dict[str, Callable[..., BolzaProblem]] = {
    "steering": steering,
    "lq_scalar": lq_scalar,
    "constant_drift": constant_drift,
    "lq_initial": lq_initial,
    "steering_plane": steering_plane,
}

# Expression form of each builtin, used to cross-check the expression binder
BUILTIN_EXPRESSIONS: Dict[str, Dict] = {
    "steering": {"f0": "-(u1^2)/2", "f": ["u1"], "g": [], "h": ["x1 - p1"]},
    "lq_scalar": {"f0": "-(x1^2 + u1^2)/2 - p1*x1", "f": ["u1"], "g": [], "h": []},
    "constant_drift": {"f0": "0", "f": ["p1"], "g": ["x1"], "h": []},
    "lq_initial": {"f0": "-((x1 + p1)^2 + u1^2)/2", "f": ["u1"], "g": [], "h": []},
    "steering_plane": {"f0": "-(u1^2 + u2^2)/2", "f": ["u1", "u2"], "g": [], "h": ["x1 - p1", "x2 - p2"]},
}


def get_builtin(name: str, **kwargs) -> BolzaProblem:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigurationError(f"Unknown builtin '{name}'; available: {', '.join(sorted(BUILTINS))}") from None
    accepted = inspect.signature(factory).parameters
    rejected = sorted(set(kwargs) - set(accepted))
    if rejected:
        raise ConfigurationError(f"Builtin '{name}' does not take: {', '.join(rejected)}")
    return factory(**kwargs)
