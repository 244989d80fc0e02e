"""
Parameterized Bolza problems, their Hamiltonians and the Mayer augmentation

Convention: problems are maximized. The criterion of a process is
    J = integral of f0(t, x, u, pi) over [0, T] + g0(x(T), pi)
subject to x' = f(t, x, u, pi), x(0) = xi0, g_i(x(T), pi) >= 0 and
h_j(x(T), pi) = 0. Minimization users flip the sign of f0 and g0.
"""

from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import Config, Tolerances
from .errors import CallbackError, ConfigurationError, DomainError
from .models import FeasibilityReport
from .piecewise import (PiecewiseC1Fn, PiecewiseFn, antiderivative, compose, integrate,
                        merge_grids, stack, sup_norm)


class DerivMode(str, Enum):
    """Where the derivative callbacks of a problem come from"""
    ANALYTIC = "analytic"
    DUAL_AD = "dual-AD"
    CENTRAL_FD = "central-FD"


def _vec(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class ControlBox:
    """Box description of the control set U; infinite bounds allowed"""
    lower: np.ndarray
    upper: np.ndarray
    open: bool = False

    def __post_init__(self):
        lower, upper = _vec(self.lower), _vec(self.upper)
        if lower.shape != upper.shape:
            raise ConfigurationError("control_box lower and upper must have the same length")
        if np.any(lower > upper):
            raise ConfigurationError("control_box lower bound above upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, mu: int, open: bool = True) -> "ControlBox":
        return cls(np.full(mu, -np.inf), np.full(mu, np.inf), open)

    @classmethod
    def from_config(cls, data: Any, mu: int) -> "ControlBox":
        """Build from None, "open", or {lower, upper, open}"""
        if data is None or data == "open":
            return cls.unbounded(mu)
        if not isinstance(data, Mapping):
            raise ConfigurationError(f"control_box must be a mapping or 'open', got {data!r}")
        unknown = set(data) - {"lower", "upper", "open"}
        if unknown:
            raise ConfigurationError(f"Unknown control_box keys: {', '.join(sorted(unknown))}")

        def bound(key, default):
            raw = data.get(key)
            if raw is None:
                return np.full(mu, default)
            values = [default if v is None else float(v) for v in (raw if isinstance(raw, list) else [raw])]
            if len(values) != mu:
                raise ConfigurationError(f"control_box.{key} needs {mu} entries, got {len(values)}")
            return np.array(values)

        return cls(bound("lower", -np.inf), bound("upper", np.inf), bool(data.get("open", False)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def center(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if np.isfinite(lo) and np.isfinite(hi):
                out[i] = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                out[i] = max(lo, 0.0)
            elif np.isfinite(hi):
                out[i] = min(hi, 0.0)
        return out

    def contains(self, zeta: Any, tol: float = 0.0) -> bool:
        z = _vec(zeta)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def clip(self, zeta: Any) -> np.ndarray:
        return np.clip(_vec(zeta), self.lower, self.upper)

    def search_box(self, reference: Any, radius: float = Config.MP_SEARCH_RADIUS) -> Tuple[np.ndarray, np.ndarray]:
        """Finite box for searching U; infinite sides become reference +/- radius"""
        ref = _vec(reference)
        lower = np.where(np.isfinite(self.lower), self.lower, ref - radius)
        upper = np.where(np.isfinite(self.upper), self.upper, ref + radius)
        return lower, upper

    def to_dict(self) -> Dict[str, Any]:
        def clean(values):
            return [None if not np.isfinite(v) else float(v) for v in values]
        return {'lower': clean(self.lower), 'upper': clean(self.upper), 'open': self.open}


@dataclass(frozen=True)
class Derivatives:
    """
    Derivative callbacks of a problem

    Running terms take (t, x, u, pi); terminal terms take (x, pi). Gradients of
    scalar functions are 1-D arrays, Jacobians of the dynamics are (n, k).
    """
    f0_x: Optional[Callable] = None
    f_x: Optional[Callable] = None
    f0_u: Optional[Callable] = None
    f_u: Optional[Callable] = None
    f0_p: Optional[Callable] = None
    f_p: Optional[Callable] = None
    f0_t: Optional[Callable] = None
    f_t: Optional[Callable] = None
    g_x: Tuple[Callable, ...] = ()
    g_p: Tuple[Callable, ...] = ()
    h_x: Tuple[Callable, ...] = ()
    h_p: Tuple[Callable, ...] = ()

    def completed(self, fallback: "Derivatives") -> "Derivatives":
        """Fill every missing slot from fallback"""
        values = {}
        for f in fields(self):
            mine = getattr(self, f.name)
            values[f.name] = mine if mine not in (None, ()) else getattr(fallback, f.name)
        return Derivatives(**values)


def _fd_partial(fun: Callable, slot: int, scalar_slot: bool = False) -> Callable:
    """Central-difference partial of fun with respect to positional argument slot"""
    def partial(*args):
        base = _vec(args[slot])
        out = np.asarray(fun(*args), dtype=float)
        if base.size == 0:
            return np.zeros(out.shape + (0,))
        step = Config.FD_REL_STEP * (1.0 + np.linalg.norm(base))
        columns = []
        for k in range(base.size):
            shift = np.zeros_like(base)
            shift[k] = step
            plus, minus = list(args), list(args)
            plus[slot] = float(base[0] + step) if scalar_slot else base + shift
            minus[slot] = float(base[0] - step) if scalar_slot else base - shift
            columns.append((np.asarray(fun(*plus), dtype=float) - np.asarray(fun(*minus), dtype=float)) / (2 * step))
        jac = np.stack(columns, axis=-1)
        return jac[..., 0] if scalar_slot else jac
    return partial


def fd_derivatives(f0: Callable, f: Callable, g: Sequence[Callable], h: Sequence[Callable]) -> Derivatives:
    """Derivative callbacks synthesized by central differences"""
    return Derivatives(
        f0_x=_fd_partial(f0, 1), f_x=_fd_partial(f, 1),
        f0_u=_fd_partial(f0, 2), f_u=_fd_partial(f, 2),
        f0_p=_fd_partial(f0, 3), f_p=_fd_partial(f, 3),
        f0_t=_fd_partial(f0, 0, scalar_slot=True), f_t=_fd_partial(f, 0, scalar_slot=True),
        g_x=tuple(_fd_partial(gi, 0) for gi in g), g_p=tuple(_fd_partial(gi, 1) for gi in g),
        h_x=tuple(_fd_partial(hj, 0) for hj in h), h_p=tuple(_fd_partial(hj, 1) for hj in h),
    )


def _zero_reward(x, pi):
    return 0.0


@dataclass(frozen=True, eq=False)
class BolzaProblem:
    """
    Parameterized Bolza problem (T, xi0, f0, f, g0..gm, h1..hq)

    g[0] is the terminal reward; g[1:] are inequality constraints (>= 0).
    An empty g list means zero terminal reward. Immutable after construction;
    callbacks must be re-entrant.
    """
    n: int
    mu: int
    n_params: int
    T: float
    xi0: np.ndarray
    f0: Callable
    f: Callable
    g: Tuple[Callable, ...] = ()
    h: Tuple[Callable, ...] = ()
    derivs: Optional[Derivatives] = None
    control_box: Optional[ControlBox] = None
    deriv_mode: DerivMode = DerivMode.ANALYTIC
    pi0: Optional[np.ndarray] = None
    omega_guard: Optional[Tuple[np.ndarray, np.ndarray]] = None
    name: str = "problem"
    control_law: Optional[Callable] = None
    nominal_control: Optional[Callable] = None
    exact_solution: Optional[Callable] = None
    expressions: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        set_ = lambda key, value: object.__setattr__(self, key, value)
        n, mu, n_params = int(self.n), int(self.mu), int(self.n_params)
        if n < 1 or mu < 0 or n_params < 0:
            raise ConfigurationError(f"Invalid dimensions n={n}, mu={mu}, n_params={n_params}")
        set_("n", n)
        set_("mu", mu)
        set_("n_params", n_params)
        T = float(self.T)
        if not T > 0:
            raise ConfigurationError(f"Horizon must be positive, got {self.T}")
        set_("T", T)
        xi0 = _vec(self.xi0)
        if xi0.size != n:
            raise ConfigurationError(f"xi0 has {xi0.size} entries, state_dim is {n}")
        set_("xi0", xi0)
        set_("deriv_mode", DerivMode(self.deriv_mode))
        g = tuple(self.g) or (_zero_reward,)
        set_("g", g)
        set_("h", tuple(self.h))
        pi0 = np.zeros(n_params) if self.pi0 is None else _vec(self.pi0)
        if pi0.size != n_params:
            raise ConfigurationError(f"pi has {pi0.size} entries, param_dim is {n_params}")
        set_("pi0", pi0)
        if self.control_box is None:
            set_("control_box", ControlBox.unbounded(mu))
        elif self.control_box.dim != mu:
            raise ConfigurationError(f"control_box has {self.control_box.dim} entries, control_dim is {mu}")
        if self.omega_guard is not None:
            lo, hi = self.omega_guard
            set_("omega_guard", (_vec(lo), _vec(hi)))

        fallback = fd_derivatives(self.f0, self.f, g, self.h)
        if self.derivs is None:
            if self.deriv_mode == DerivMode.DUAL_AD:
                raise ConfigurationError("deriv_mode dual-AD needs expression-defined data")
            if self.deriv_mode == DerivMode.ANALYTIC:
                set_("deriv_mode", DerivMode.CENTRAL_FD)
            set_("derivs", fallback)
        else:
            set_("derivs", self.derivs.completed(fallback))
        self.check_dimensions()

    @property
    def m(self) -> int:
        return len(self.g) - 1

    @property
    def q(self) -> int:
        return len(self.h)

    def check_dimensions(self) -> None:
        """Evaluate every callback once at (0, xi0, center of U, pi0)"""
        t, x, u, pi = 0.0, self.xi0, self.control_box.center(), self.pi0
        n, mu, k = self.n, self.mu, self.n_params
        d = self.derivs
        expected = [
            ("f0", lambda: self.f0(t, x, u, pi), ()),
            ("f", lambda: self.f(t, x, u, pi), (n,)),
            ("D2 f0", lambda: d.f0_x(t, x, u, pi), (n,)),
            ("D2 f", lambda: d.f_x(t, x, u, pi), (n, n)),
            ("D3 f0", lambda: d.f0_u(t, x, u, pi), (mu,)),
            ("D3 f", lambda: d.f_u(t, x, u, pi), (n, mu)),
            ("D4 f0", lambda: d.f0_p(t, x, u, pi), (k,)),
            ("D4 f", lambda: d.f_p(t, x, u, pi), (n, k)),
            ("d1 f0", lambda: d.f0_t(t, x, u, pi), ()),
            ("d1 f", lambda: d.f_t(t, x, u, pi), (n,)),
        ]
        if len(d.g_x) != len(self.g) or len(d.g_p) != len(self.g):
            raise ConfigurationError("Terminal derivative callbacks do not match the g list")
        if len(d.h_x) != len(self.h) or len(d.h_p) != len(self.h):
            raise ConfigurationError("Constraint derivative callbacks do not match the h list")
        for i, (gi, gx, gp) in enumerate(zip(self.g, d.g_x, d.g_p)):
            expected += [(f"g{i}", lambda gi=gi: gi(x, pi), ()),
                         (f"D1 g{i}", lambda gx=gx: gx(x, pi), (n,)),
                         (f"D2 g{i}", lambda gp=gp: gp(x, pi), (k,))]
        for j, (hj, hx, hp) in enumerate(zip(self.h, d.h_x, d.h_p), start=1):
            expected += [(f"h{j}", lambda hj=hj: hj(x, pi), ()),
                         (f"D1 h{j}", lambda hx=hx: hx(x, pi), (n,)),
                         (f"D2 h{j}", lambda hp=hp: hp(x, pi), (k,))]
        for label, call, shape in expected:
            try:
                value = np.asarray(call(), dtype=float)
            except Exception as exc:
                raise ConfigurationError(f"Callback {label} failed at the reference point: {exc}") from exc
            if value.size != int(np.prod(shape)):
                raise ConfigurationError(f"Callback {label} returned shape {value.shape}, expected {shape}")

    # ------------------------------------------------------------------
    # Pointwise evaluation helpers
    # ------------------------------------------------------------------

    def running(self, t, x, u, pi) -> float:
        return float(np.asarray(self.f0(t, x, u, pi), dtype=float).reshape(-1)[0])

    def dynamics(self, t, x, u, pi) -> np.ndarray:
        return _vec(self.f(t, x, u, pi))

    def state_jacobian(self, t, x, u, pi) -> np.ndarray:
        try:
            return np.asarray(self.derivs.f_x(t, x, u, pi), dtype=float).reshape(self.n, self.n)
        except Exception as exc:
            raise CallbackError(f"State Jacobian callback failed: {exc}", location=t) from exc

    def control_jacobian(self, t, x, u, pi) -> np.ndarray:
        return np.asarray(self.derivs.f_u(t, x, u, pi), dtype=float).reshape(self.n, self.mu)

    def param_jacobian(self, t, x, u, pi) -> np.ndarray:
        return np.asarray(self.derivs.f_p(t, x, u, pi), dtype=float).reshape(self.n, self.n_params)

    def terminal_values(self, x_T, pi) -> Tuple[np.ndarray, np.ndarray]:
        """(g0..gm, h1..hq) at the terminal state"""
        g = np.array([float(np.asarray(gi(x_T, pi)).reshape(-1)[0]) for gi in self.g])
        h = np.array([float(np.asarray(hj(x_T, pi)).reshape(-1)[0]) for hj in self.h])
        return g, h

    def terminal_gradients(self, x_T, pi) -> Tuple[np.ndarray, np.ndarray]:
        """Rows D1 g_alpha and D1 h_beta as (m+1, n) and (q, n) arrays"""
        gx = np.array([_vec(gx(x_T, pi)) for gx in self.derivs.g_x]).reshape(len(self.g), self.n)
        hx = np.array([_vec(hx(x_T, pi)) for hx in self.derivs.h_x]).reshape(self.q, self.n)
        return gx, hx

    def terminal_param_gradients(self, x_T, pi) -> Tuple[np.ndarray, np.ndarray]:
        gp = np.array([_vec(gp(x_T, pi)) for gp in self.derivs.g_p]).reshape(len(self.g), self.n_params)
        hp = np.array([_vec(hp(x_T, pi)) for hp in self.derivs.h_p]).reshape(self.q, self.n_params)
        return gp, hp

    def params(self, pi: Optional[Any] = None) -> np.ndarray:
        """pi as a vector, pi0 when omitted"""
        if pi is None:
            return self.pi0.copy()
        vec = _vec(pi)
        if vec.size != self.n_params:
            raise DomainError(f"Parameter has {vec.size} entries, param_dim is {self.n_params}")
        return vec


@dataclass(frozen=True)
class Hamiltonian:
    """H(t, x, u, p, lambda0) = lambda0 * f0 + p . f"""
    problem: BolzaProblem
    lambda0: float

    def value(self, t, x, u, p, pi) -> float:
        P = self.problem
        return self.lambda0 * P.running(t, x, u, pi) + float(np.dot(_vec(p), P.dynamics(t, x, u, pi)))

    def grad_u(self, t, x, u, p, pi) -> np.ndarray:
        d = self.problem.derivs
        return self.lambda0 * _vec(d.f0_u(t, x, u, pi)) + self.problem.control_jacobian(t, x, u, pi).T @ _vec(p)

    def grad_x(self, t, x, u, p, pi) -> np.ndarray:
        d = self.problem.derivs
        return self.lambda0 * _vec(d.f0_x(t, x, u, pi)) + self.problem.state_jacobian(t, x, u, pi).T @ _vec(p)

    def partial_t(self, t, x, u, p, pi) -> float:
        d = self.problem.derivs
        return float(self.lambda0 * float(np.asarray(d.f0_t(t, x, u, pi)).reshape(-1)[0])
                     + np.dot(_vec(p), _vec(d.f_t(t, x, u, pi))))


def hamiltonian_eval(H: Hamiltonian, t, xi, zeta, p, pi) -> float:
    return H.value(t, xi, zeta, p, pi)


@dataclass
class Process:
    """State, control and parameter of one candidate"""
    x: PiecewiseC1Fn
    u: PiecewiseFn
    pi: np.ndarray

    def __post_init__(self):
        self.pi = _vec(self.pi)

    @property
    def grid(self):
        return merge_grids(self.x.grid, self.u.grid)

    @property
    def T(self) -> float:
        return self.x.grid.T

    def terminal_state(self) -> np.ndarray:
        return self.x.eval(self.x.grid.T)


def _check_process_dims(P: BolzaProblem, proc: Process) -> None:
    if proc.x.dim != P.n:
        raise DomainError(f"State has dimension {proc.x.dim}, problem expects {P.n}")
    if proc.u.dim != P.mu and not (P.mu == 0 and proc.u.dim <= 1):
        raise DomainError(f"Control has dimension {proc.u.dim}, problem expects {P.mu}")
    if proc.pi.size != P.n_params:
        raise DomainError(f"Parameter has dimension {proc.pi.size}, problem expects {P.n_params}")
    if abs(proc.T - P.T) > Config.BREAKPOINT_DEDUP_RTOL * P.T:
        raise DomainError(f"Process horizon {proc.T} differs from problem horizon {P.T}")


def validate_process(P: BolzaProblem, proc: Process, tol: Optional[float] = None) -> FeasibilityReport:
    """Dynamics residual, initial error and terminal slacks of a process"""
    _check_process_dims(P, proc)
    tol = Tolerances().feasibility if tol is None else float(tol)
    pi = proc.pi
    mismatch = compose(lambda t, dx, x, u: dx - P.dynamics(t, x, u, pi),
                       proc.x.extended_derivative(), proc.x, proc.u)
    g, h = P.terminal_values(proc.terminal_state(), pi)
    return FeasibilityReport(
        dynamics_residual=sup_norm(mismatch),
        initial_error=float(np.linalg.norm(proc.x.eval(0.0) - P.xi0)),
        inequality_slacks=[float(v) for v in g[1:]],
        equality_violations=[float(abs(v)) for v in h],
        tolerance=tol,
    )


def running_integrand(P: BolzaProblem, proc: Process) -> PiecewiseFn:
    pi = proc.pi
    return compose(lambda t, x, u: P.running(t, x, u, pi), proc.x, proc.u)


def criterion(P: BolzaProblem, proc: Process) -> float:
    """integral of f0 over [0, T] plus g0(x(T), pi)"""
    _check_process_dims(P, proc)
    running = integrate(running_integrand(P, proc), 0.0, P.T)[0]
    g, _ = P.terminal_values(proc.terminal_state(), proc.pi)
    return float(running + g[0])


# ----------------------------------------------------------------------
# Mayer augmentation: state (sigma, x), sigma' = f0, zero running reward
# ----------------------------------------------------------------------


def augment_to_mayer(P: BolzaProblem) -> BolzaProblem:
    """Lift P to the Mayer problem on (sigma, x) with G0 = sigma + g0"""
    n, mu, k = P.n, P.mu, P.n_params
    d = P.derivs

    def F(t, X, u, pi):
        x = X[1:]
        return np.concatenate(([P.running(t, x, u, pi)], P.dynamics(t, x, u, pi)))

    def F_x(t, X, u, pi):
        x = X[1:]
        J = np.zeros((n + 1, n + 1))
        J[0, 1:] = _vec(d.f0_x(t, x, u, pi))
        J[1:, 1:] = P.state_jacobian(t, x, u, pi)
        return J

    def F_u(t, X, u, pi):
        x = X[1:]
        return np.vstack([_vec(d.f0_u(t, x, u, pi)).reshape(1, mu), P.control_jacobian(t, x, u, pi)])

    def F_p(t, X, u, pi):
        x = X[1:]
        return np.vstack([_vec(d.f0_p(t, x, u, pi)).reshape(1, k), P.param_jacobian(t, x, u, pi)])

    def F_t(t, X, u, pi):
        x = X[1:]
        return np.concatenate((_vec(d.f0_t(t, x, u, pi)), _vec(d.f_t(t, x, u, pi))))

    def lifted_terminal(fn, shift=0.0):
        return lambda X, pi: shift * X[0] + float(np.asarray(fn(X[1:], pi)).reshape(-1)[0])

    def lifted_gradient(fn, sigma_slope):
        return lambda X, pi: np.concatenate(([sigma_slope], _vec(fn(X[1:], pi))))

    def lifted_param(fn):
        return lambda X, pi: _vec(fn(X[1:], pi))

    G = tuple(lifted_terminal(gi, 1.0 if i == 0 else 0.0) for i, gi in enumerate(P.g))
    H = tuple(lifted_terminal(hj) for hj in P.h)
    derivs = Derivatives(
        f0_x=lambda t, X, u, pi: np.zeros(n + 1),
        f_x=F_x,
        f0_u=lambda t, X, u, pi: np.zeros(mu),
        f_u=F_u,
        f0_p=lambda t, X, u, pi: np.zeros(k),
        f_p=F_p,
        f0_t=lambda t, X, u, pi: 0.0,
        f_t=F_t,
        g_x=tuple(lifted_gradient(gx, 1.0 if i == 0 else 0.0) for i, gx in enumerate(d.g_x)),
        g_p=tuple(lifted_param(gp) for gp in d.g_p),
        h_x=tuple(lifted_gradient(hx, 0.0) for hx in d.h_x),
        h_p=tuple(lifted_param(hp) for hp in d.h_p),
    )

    control_law = None
    if P.control_law is not None:
        # sigma's adjoint plays the part of lambda0 in the Bolza Hamiltonian
        control_law = lambda t, X, p, lambda0, pi: P.control_law(t, X[1:], p[1:], p[0], pi)

    return BolzaProblem(
        n=n + 1, mu=mu, n_params=k, T=P.T,
        xi0=np.concatenate(([0.0], P.xi0)),
        f0=lambda t, X, u, pi: 0.0,
        f=F, g=G, h=H, derivs=derivs,
        control_box=P.control_box,
        deriv_mode=DerivMode.ANALYTIC,
        pi0=P.pi0,
        omega_guard=None if P.omega_guard is None else (
            np.concatenate(([-np.inf], P.omega_guard[0])), np.concatenate(([np.inf], P.omega_guard[1]))),
        name=f"{P.name}-mayer",
        control_law=control_law,
        nominal_control=P.nominal_control,
    )


def lift_process(P: BolzaProblem, proc: Process) -> Process:
    """Process of augment_to_mayer(P) with sigma(t) = integral of f0 over [0, t]"""
    sigma = antiderivative(running_integrand(P, proc), np.zeros(1))
    return Process(stack([sigma, proc.x]), proc.u, proc.pi)
