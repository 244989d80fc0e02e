"""
Value function of a parameterized problem family

Envelope directional derivative and gradient of the optimal value, finite
difference oracles, the differential of integral functionals, and shell
scans giving numerical continuity evidence for multipliers, adjoints and the
value gradient.
"""

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .concurrency import ordered_map
from .config import Config, Tolerances
from .errors import (ConfigurationError, LIViolatedError, NumericError, OctoolError,
                     UnsupportedProblemError)
from .models import (AdjointPath, ContinuityScan, EnvelopeReport, FDRow, FDTable, Multipliers,
                     Shell, ShellSample, ShootingResult, is_monotone)
from .output import ColoredOutput
from .piecewise import PiecewiseFn, compose, integrate, linear_combination, sup_norm
from .pmp import adjoint_backward, shooting_solve, solve_multipliers_LI, transversality_terminal
from .problem import BolzaProblem, Process, criterion, validate_process

TERMS = ("Tg0", "Tg", "Th", "Tf0", "Tf")


def _vec(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


# ----------------------------------------------------------------------
# Solution families
# ----------------------------------------------------------------------


class SolutionFamily:
    """Provider pi -> optimal process of (P, pi)"""

    def __init__(self, problem: BolzaProblem):
        self.problem = problem

    def solve(self, pi: np.ndarray) -> Process:
        raise NotImplementedError

    def __call__(self, pi: Optional[Any] = None) -> Process:
        return self.solve(self.problem.params(pi))


class AnalyticFamily(SolutionFamily):
    """Family given by a closed-form provider, the problem's exact solution by default"""

    def __init__(self, problem: BolzaProblem, provider: Optional[Callable[[np.ndarray], Process]] = None):
        super().__init__(problem)
        provider = provider or problem.exact_solution
        if provider is None:
            raise ConfigurationError(f"Problem '{problem.name}' has no exact solution; use a shooting family")
        self.provider = provider

    def solve(self, pi: np.ndarray) -> Process:
        return self.provider(pi)


class ShootingFamily(SolutionFamily):
    """
    Family computed by indirect shooting

    Every solve is warm-started from the solution at pi0, which is computed
    once. Results are cached per parameter.
    """

    def __init__(self, problem: BolzaProblem, pi0: Optional[Any] = None, tol: Optional[Tolerances] = None):
        super().__init__(problem)
        self.pi0 = problem.params(pi0)
        self.tol = tol or Tolerances()
        self._lock = threading.Lock()
        self._warm: Optional[ShootingResult] = None
        self._results: Dict[Tuple[float, ...], ShootingResult] = {}

    def warm_start(self) -> ShootingResult:
        with self._lock:
            if self._warm is None:
                self._warm = shooting_solve(self.problem, self.pi0, tol=self.tol)
                self._results[tuple(self.pi0.tolist())] = self._warm
            return self._warm

    def shoot(self, pi: np.ndarray) -> ShootingResult:
        key = tuple(_vec(pi).tolist())
        warm = self.warm_start()
        with self._lock:
            cached = self._results.get(key)
        if cached is not None:
            return cached
        guess = (warm.adjoint.p.eval(0.0), warm.multipliers.mus)
        result = shooting_solve(self.problem, pi, guess, tol=self.tol)
        with self._lock:
            self._results[key] = result
        return result

    def solve(self, pi: np.ndarray) -> Process:
        return self.shoot(pi).process


def value(P: BolzaProblem, family: SolutionFamily, pi: Optional[Any] = None) -> float:
    """V[pi], the criterion of the family's process at pi"""
    return criterion(P, family(pi))


# ----------------------------------------------------------------------
# Envelope formula
# ----------------------------------------------------------------------


@dataclass
class EnvelopeContext:
    """Solution data at pi0 reused by every envelope evaluation"""
    pi: np.ndarray
    process: Process
    multipliers: Multipliers
    adjoint: AdjointPath
    covectors: Dict[str, np.ndarray] = field(default_factory=dict)

    def terms(self, dpi: Any) -> Dict[str, float]:
        d = _vec(dpi)
        return {name: float(self.covectors[name] @ d) for name in TERMS}

    @property
    def gradient(self) -> np.ndarray:
        total = np.zeros(self.pi.size)
        for name in TERMS:
            total = total + self.covectors[name]
        return total


def _term_covectors(P: BolzaProblem, proc: Process, mult: Multipliers, adjoint: AdjointPath) -> Dict[str, np.ndarray]:
    pi = proc.pi
    k = P.n_params
    if k == 0:
        return {name: np.zeros(0) for name in TERMS}
    gp, hp = P.terminal_param_gradients(proc.terminal_state(), pi)
    lambdas, mus = _vec(mult.lambdas), _vec(mult.mus)
    running = compose(lambda t, x, u: _vec(P.derivs.f0_p(t, x, u, pi)), proc.x, proc.u)
    adjoint_weighted = compose(lambda t, x, u, p: P.param_jacobian(t, x, u, pi).T @ p, proc.x, proc.u, adjoint.p)
    return {
        "Tg0": gp[0],
        "Tg": lambdas[1:] @ gp[1:] if P.m else np.zeros(k),
        "Th": mus @ hp if P.q else np.zeros(k),
        "Tf0": integrate(running, 0.0, P.T),
        "Tf": integrate(adjoint_weighted, 0.0, P.T),
    }


def envelope_context(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any] = None,
                     tol: Optional[Tolerances] = None) -> EnvelopeContext:
    """
    Process, lambda0 = 1 multipliers and adjoint at pi0

    Raises UnsupportedProblemError when the linear-independence route fails,
    since the multipliers entering the formula are then not unique.
    """
    tol = tol or Tolerances()
    pi0 = P.params(pi0)
    proc = family(pi0)
    report = validate_process(P, proc, tol.feasibility)
    if not report.feasible:
        raise NumericError(f"Provider returned an infeasible process at pi={pi0.tolist()}: "
                           f"dynamics residual {report.dynamics_residual:.3e}")
    try:
        mult = solve_multipliers_LI(P, proc, tol)
    except LIViolatedError as exc:
        raise UnsupportedProblemError(f"Envelope formula needs unique multipliers: {exc}") from exc
    adjoint = adjoint_backward(P, proc, 1.0, transversality_terminal(P, proc, mult))
    return EnvelopeContext(pi0, proc, mult, adjoint, _term_covectors(P, proc, mult, adjoint))


def envelope_directional(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any], dpi: Any,
                         context: Optional[EnvelopeContext] = None,
                         fd_step: Optional[float] = Config.ENVELOPE_FD_STEP) -> EnvelopeReport:
    """
    One-sided directional derivative of V at pi0 along dpi

    The five summands are the terminal reward, inequality, equality, running
    reward and dynamics contributions; total is their sum. When fd_step is
    given the report carries the forward value difference, the oracle for a
    one-sided derivative, and the central difference next to it. Provider
    failures are recorded in fd_status.
    """
    context = context or envelope_context(P, family, pi0)
    d = _vec(dpi)
    if d.size != P.n_params:
        raise ConfigurationError(f"Direction has {d.size} entries, param_dim is {P.n_params}")
    terms = context.terms(d)
    total = terms["Tg0"] + terms["Tg"] + terms["Th"] + terms["Tf0"] + terms["Tf"]
    report = EnvelopeReport(d.tolist(), terms, total)
    if fd_step is None or not P.n_params:
        return report
    base = criterion(P, context.process)
    try:
        upper = value(P, family, context.pi + fd_step * d)
    except OctoolError as exc:
        ColoredOutput.warning(f"Envelope FD comparison failed at +h: {exc}")
        report.fd_status = f"failed: {exc}"
        return report
    report.fd_value = (upper - base) / fd_step
    report.fd_error = abs(total - report.fd_value)
    report.fd_status = "ok"
    try:
        lower = value(P, family, context.pi - fd_step * d)
    except OctoolError as exc:
        ColoredOutput.warning(f"Central FD comparison failed at -h: {exc}")
        report.fd_status = f"central failed: {exc}"
        return report
    report.fd_central = (upper - lower) / (2 * fd_step)
    report.fd_central_error = abs(total - report.fd_central)
    return report


def envelope_gradient(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any] = None,
                      context: Optional[EnvelopeContext] = None,
                      seed: int = Config.DEFAULT_SEED) -> np.ndarray:
    """
    Gradient of V at pi0, one envelope evaluation per basis direction

    Linearity is confirmed on one seeded random direction.
    """
    context = context or envelope_context(P, family, pi0)
    k = P.n_params
    gradient = np.array([envelope_directional(P, family, None, e, context, fd_step=None).total
                         for e in np.eye(k)])
    if k:
        direction = np.random.default_rng(seed).standard_normal(k)
        expected = envelope_directional(P, family, None, direction, context, fd_step=None).total
        mismatch = abs(float(gradient @ direction) - expected)
        if mismatch > Config.LINEARITY_TOL * (1.0 + abs(expected)):
            raise NumericError(f"Envelope formula is not linear in the direction: mismatch {mismatch:.3e}")
    return gradient.reshape(k)


def value_fd_oracle(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any], dpi: Any,
                    h_list: Sequence[float] = Config.FD_H_LIST,
                    reference: Optional[float] = None) -> FDTable:
    """
    Forward and central differences of V along dpi for every step in h_list

    The forward difference is the oracle for the one-sided derivative. Rows
    whose provider calls fail are kept with a failed status. With a reference
    value the convergence order of the forward error is fitted in log-log.
    """
    pi0 = P.params(pi0)
    d = _vec(dpi)
    base = value(P, family, pi0)

    def row(h):
        try:
            upper = value(P, family, pi0 + h * d)
            lower = value(P, family, pi0 - h * d)
        except OctoolError as exc:
            return FDRow(h, None, None, status=f"failed: {exc}")
        forward = (upper - base) / h
        central = (upper - lower) / (2 * h)
        if reference is None:
            return FDRow(h, forward, central)
        return FDRow(h, forward, central, abs(forward - reference), abs(central - reference))

    rows = ordered_map(row, [float(h) for h in h_list])
    good = [r for r in rows if r.status == "ok"]

    richardson = None
    if len(good) >= 2:
        coarse, fine = good[-2], good[-1]
        ratio = coarse.h / fine.h
        richardson = (ratio * fine.forward - coarse.forward) / (ratio - 1.0)

    order = None
    fit = [r for r in good if r.forward_error is not None and r.forward_error > 1e-15]
    if len(fit) >= 2:
        order = float(np.polyfit(np.log([r.h for r in fit]), np.log([r.forward_error for r in fit]), 1)[0])
    return FDTable(rows, richardson, order, reference)


# ----------------------------------------------------------------------
# Integral functionals
# ----------------------------------------------------------------------


def integral_functional(f: Callable, x0: PiecewiseFn) -> float:
    """F(x0) = integral over [0, T] of f(t, x0(t))"""
    integrand = compose(lambda t, v: float(np.asarray(f(t, v)).reshape(-1)[0]), x0)
    return float(integrate(integrand, 0.0, x0.grid.T)[0])


def integral_functional_differential(derivative: Callable, x0: PiecewiseFn, h: PiecewiseFn) -> float:
    """
    Differential of F at x0 applied to h

    Args:
        derivative: (t, v) -> gradient of f in v
        x0: Base function
        h: Increment

    Returns:
        integral over [0, T] of derivative(t, x0(t)) . h(t)
    """
    integrand = compose(lambda t, v, w: float(_vec(derivative(t, v)) @ _vec(w)), x0, h)
    return float(integrate(integrand, 0.0, x0.grid.T)[0])


def integral_functional_fd(f: Callable, x0: PiecewiseFn, h: PiecewiseFn, theta: float) -> float:
    """(F(x0 + theta h) - F(x0)) / theta"""
    if theta == 0:
        raise ValueError("theta must be nonzero")
    shifted = linear_combination([1.0, theta], [x0, h])
    return (integral_functional(f, shifted) - integral_functional(f, x0)) / theta


# ----------------------------------------------------------------------
# Continuity scans
# ----------------------------------------------------------------------


def shell_parameters(pi0: np.ndarray, radii: Sequence[float] = Config.SHELL_RADII,
                     directions: int = Config.SHELL_DIRECTIONS,
                     seed: int = Config.DEFAULT_SEED) -> List[Tuple[int, np.ndarray]]:
    """
    (shell index, pi) pairs on spheres around pi0, largest radius first

    Radii are relative to max(1, |pi0|). Directions are seeded unit vectors.
    """
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.linalg.norm(pi0)))
    out = []
    for index, radius in enumerate(sorted(radii, reverse=True)):
        for _ in range(directions):
            raw = rng.standard_normal(pi0.size)
            norm = np.linalg.norm(raw)
            unit = raw / norm if norm > 0 else raw
            out.append((index, pi0 + radius * scale * unit))
    return out


def _run_scan(kind: str, pi0: np.ndarray, radii: Sequence[float], directions: int, seed: int,
              measure: Callable[[np.ndarray], Any],
              compare: Callable[[Any, Any, np.ndarray], Tuple[float, Dict[str, Any]]],
              secondary_keys: Sequence[str] = ()) -> ContinuityScan:
    base = measure(pi0)
    ordered_radii = sorted(radii, reverse=True)
    points = shell_parameters(pi0, ordered_radii, directions, seed)

    def sample(item):
        _, pi = item
        distance = float(np.linalg.norm(pi - pi0))
        try:
            deviation, extras = compare(measure(pi), base, pi)
        except (LIViolatedError, UnsupportedProblemError) as exc:
            return ShellSample(pi.tolist(), distance, "out-of-Q", extras={'error': str(exc)})
        except OctoolError as exc:
            return ShellSample(pi.tolist(), distance, "failed", extras={'error': str(exc)})
        return ShellSample(pi.tolist(), distance, "ok", deviation, extras)

    samples = ordered_map(sample, points)
    shells = []
    secondary: Dict[str, List[Optional[float]]] = {key: [] for key in secondary_keys}
    for index, radius in enumerate(ordered_radii):
        members = [s for (i, _), s in zip(points, samples) if i == index]
        ok = [s for s in members if s.status == "ok"]
        status = "ok"
        if len(ok) < len(members):
            status = "out-of-Q" if any(s.status == "out-of-Q" for s in members) else "failed"
        shells.append(Shell(radius, members, max((s.deviation for s in ok), default=None), status))
        for key in secondary_keys:
            secondary[key].append(max((s.extras[key] for s in ok), default=None))
    monotone = is_monotone([s.max_deviation for s in shells])
    return ContinuityScan(kind, pi0.tolist(), shells, monotone, secondary or None)


def _multipliers_at(P: BolzaProblem, family: SolutionFamily, pi: np.ndarray, tol: Tolerances):
    proc = family(pi)
    return proc, solve_multipliers_LI(P, proc, tol)


def multiplier_continuity_scan(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any] = None,
                               radii: Sequence[float] = Config.SHELL_RADII,
                               directions: int = Config.SHELL_DIRECTIONS,
                               seed: int = Config.DEFAULT_SEED,
                               tol: Optional[Tolerances] = None) -> ContinuityScan:
    """Deviation |(lambda, mu)[pi] - (lambda, mu)[pi0]| on each shell"""
    tol = tol or Tolerances()

    def measure(pi):
        _, mult = _multipliers_at(P, family, pi, tol)
        return np.concatenate((_vec(mult.lambdas), _vec(mult.mus)))

    def compare(current, base, pi):
        return float(np.linalg.norm(current - base)), {}

    return _run_scan("multipliers", P.params(pi0), radii, directions, seed, measure, compare)


def _gradient_norm_field(P: BolzaProblem, proc: Process, base: Process, jacobian: Callable) -> PiecewiseFn:
    pi, pi_b = proc.pi, base.pi

    def gap(t, x, u, xb, ub):
        return np.linalg.norm(np.atleast_2d(jacobian(t, x, u, pi)) - np.atleast_2d(jacobian(t, xb, ub, pi_b)), 2)

    return compose(gap, proc.x, proc.u, base.x, base.u)


def adjoint_continuity_scan(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any] = None,
                            radii: Sequence[float] = Config.SHELL_RADII,
                            directions: int = Config.SHELL_DIRECTIONS,
                            seed: int = Config.DEFAULT_SEED,
                            tol: Optional[Tolerances] = None) -> ContinuityScan:
    """
    Sup distance |p[pi] - p[pi0]| on each shell

    Secondary diagnostics per shell: terminal adjoint distance, the integral
    mismatches psi1 (state Jacobian of f) and psi1_0 (state gradient of f0),
    and the Gronwall bound they combine into.
    """
    tol = tol or Tolerances()

    def measure(pi):
        proc, mult = _multipliers_at(P, family, pi, tol)
        return proc, adjoint_backward(P, proc, 1.0, transversality_terminal(P, proc, mult))

    def compare(current, base, pi):
        proc, adjoint = current
        proc_b, adjoint_b = base
        distance = sup_norm(adjoint.p - adjoint_b.p)
        terminal = float(np.linalg.norm(adjoint.terminal - adjoint_b.terminal))
        psi1 = float(integrate(_gradient_norm_field(P, proc, proc_b, P.state_jacobian), 0.0, P.T)[0])
        psi1_0 = float(integrate(_gradient_norm_field(P, proc, proc_b, P.derivs.f0_x), 0.0, P.T)[0])
        growth = float(integrate(compose(lambda t, x, u: np.linalg.norm(P.state_jacobian(t, x, u, proc.pi), 2),
                                         proc.x, proc.u), 0.0, P.T)[0])
        bound = (terminal + sup_norm(adjoint_b.p) * psi1 + psi1_0) * np.exp(growth)
        return distance, {'terminal': terminal, 'psi1': psi1, 'psi1_0': psi1_0, 'bound': float(bound)}

    return _run_scan("adjoint", P.params(pi0), radii, directions, seed, measure, compare,
                     secondary_keys=("terminal", "psi1", "psi1_0", "bound"))


def frechet_continuity_check(P: BolzaProblem, family: SolutionFamily, pi0: Optional[Any] = None,
                             radii: Sequence[float] = Config.SHELL_RADII,
                             directions: int = Config.SHELL_DIRECTIONS,
                             seed: int = Config.DEFAULT_SEED,
                             tol: Optional[Tolerances] = None) -> ContinuityScan:
    """
    Gradient deviation |DV[pi] - DV[pi0]| on each shell

    The secondary row 'linearization' holds the largest
    |V(pi) - V(pi0) - DV[pi0] . (pi - pi0)| / |pi - pi0| per shell.
    """
    tol = tol or Tolerances()

    def measure(pi):
        context = envelope_context(P, family, pi, tol)
        return criterion(P, context.process), context.gradient

    def compare(current, base, pi):
        v, gradient = current
        v_b, gradient_b = base
        step = pi - pi0_vec
        distance = float(np.linalg.norm(step))
        linearization = abs(v - v_b - float(gradient_b @ step)) / distance if distance > 0 else 0.0
        return float(np.linalg.norm(gradient - gradient_b)), {'linearization': linearization}

    pi0_vec = P.params(pi0)
    return _run_scan("gradient", pi0_vec, radii, directions, seed, measure, compare,
                     secondary_keys=("linearization",))
