"""
Forward flow of controlled dynamics

Cauchy integration with hard restarts at every control breakpoint, the Picard
operator, needle variations of a reference control, the resolvent of the
linearized equation, and the first-order terminal map of a spike list.
"""

import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import lu_factor, lu_solve, solve

from .concurrency import ordered_map
from .config import Config
from .errors import CallbackError, DomainError, IntegrationError, NumericError
from .models import ResidualRow, ResidualStudy
from .output import ColoredOutput
from .piecewise import (Grid, PiecewiseC1Fn, PiecewiseFn, antiderivative, bielecki_norm, compose,
                        linear_combination, merge_grids, sup_norm)
from .problem import BolzaProblem, Process


def _vec(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


def _guard_event(P: BolzaProblem) -> Callable:
    """Positive while the state is inside the blow-up bound and the Omega box"""
    bound = Config.BLOWUP_BOUND
    box = P.omega_guard

    def event(t, y):
        margin = bound - np.linalg.norm(y)
        if box is not None:
            lo, hi = box
            margin = min(margin, float(np.min(y - lo)), float(np.min(hi - y)))
        return margin

    event.terminal = True
    event.direction = -1
    return event


def ode_segment(rhs: Callable, a: float, b: float, y0: np.ndarray, event: Optional[Callable]) -> Callable:
    """
    Integrate from t=a to t=b (b < a runs backward) and return a dense evaluator

    The evaluator is clamped to the segment and returns y0 exactly at t=a.
    """
    def wrapped(t, y):
        try:
            out = rhs(t, y)
        except NumericError:
            raise
        except Exception as exc:
            raise CallbackError(f"Vector field callback failed: {exc}", location=t) from exc
        if not np.all(np.isfinite(out)):
            raise IntegrationError("Non-finite vector field value", escape_time=t)
        return out

    sol = solve_ivp(wrapped, (a, b), y0, method=Config.ODE_METHOD, rtol=Config.ODE_RTOL, atol=Config.ODE_ATOL,
                    dense_output=True, events=event)
    if sol.status == 1:
        raise IntegrationError("State left the integration guard", escape_time=float(sol.t_events[0][0]))
    if sol.status != 0:
        raise IntegrationError(f"Integrator failed: {sol.message}", escape_time=float(sol.t[-1]))
    dense = sol.sol
    start = np.array(y0, dtype=float)
    lo, hi = min(a, b), max(a, b)

    def evaluator(t):
        if (t - a) * (b - a) <= 0:
            return start.copy()
        return dense(min(max(t, lo), hi))
    return evaluator


def integrate_cauchy(P: BolzaProblem, u: PiecewiseFn, pi: Optional[Any] = None,
                     xi0: Optional[Any] = None) -> PiecewiseC1Fn:
    """
    Solve x' = f(t, x, u(t), pi), x(0) = xi0 on the grid of u

    Each control segment is integrated separately, starting from the exact end
    value of the previous one. The derivative segments are f along the result.
    """
    pi = P.params(pi)
    state = P.xi0.copy() if xi0 is None else _vec(xi0)
    event = _guard_event(P)
    segments, derivatives = [], []
    for useg, (a, b) in zip(u.segments, u.grid.segments()):
        rhs = lambda t, y, useg=useg: P.dynamics(t, y, _vec(useg(t)), pi)
        xseg = ode_segment(rhs, a, b, state, event)
        segments.append(xseg)
        derivatives.append(lambda t, xseg=xseg, useg=useg: P.dynamics(t, xseg(t), _vec(useg(t)), pi))
        state = xseg(b)
    return PiecewiseC1Fn(u.grid, segments, derivatives)


def picard_operator(P: BolzaProblem, x: PiecewiseC1Fn, u: PiecewiseFn, pi: Optional[Any] = None) -> PiecewiseC1Fn:
    """t -> xi0 + integral over [0, t] of f(s, x(s), u(s), pi)"""
    pi = P.params(pi)
    field = compose(lambda t, xv, uv: P.dynamics(t, xv, uv, pi), x, u)
    return antiderivative(field, P.xi0)


@dataclass
class PicardCheck:
    """Bielecki contraction check of the Picard operator"""
    weight: float
    image_distance: float
    distance: float
    factor: float

    @property
    def holds(self) -> bool:
        return self.image_distance <= self.factor * self.distance * (1 + 1e-9) + 1e-14


def picard_contraction(P: BolzaProblem, x: PiecewiseC1Fn, z: PiecewiseC1Fn, u: PiecewiseFn,
                       pi: Optional[Any], L: float) -> PicardCheck:
    """
    Compare |Phi(x) - Phi(z)| with (1 - exp(-L T)) |x - z| in the Bielecki norm

    L is a Lipschitz constant of f in the state.
    """
    image = picard_operator(P, x, u, pi) - picard_operator(P, z, u, pi)
    return PicardCheck(
        weight=L,
        image_distance=bielecki_norm(image, L),
        distance=bielecki_norm(x - z, L),
        factor=1.0 - math.exp(-L * P.T),
    )


# ----------------------------------------------------------------------
# Needle variations
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpikeList:
    """Spike times 0 < t_1 <= ... <= t_N < T with needle values v_i"""
    times: Tuple[float, ...]
    values: Tuple[np.ndarray, ...]
    T: float

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(_vec(v) for v in self.values)
        if not times:
            raise DomainError("A spike list needs at least one spike")
        if len(times) != len(values):
            raise DomainError("One needle value per spike time is required")
        if any(not 0.0 < t < self.T for t in times):
            raise DomainError(f"Spike times must lie strictly inside ]0, {self.T}[")
        if any(b < a for a, b in zip(times, times[1:])):
            raise DomainError("Spike times must be nondecreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def create(cls, P: BolzaProblem, spikes: Sequence[Tuple[float, Any]]) -> "SpikeList":
        """Spike list checked against the control set of P"""
        spike_list = cls(tuple(t for t, _ in spikes), tuple(v for _, v in spikes), P.T)
        for t, v in zip(spike_list.times, spike_list.values):
            if v.size != P.mu:
                raise DomainError(f"Needle value at t={t} has {v.size} entries, control_dim is {P.mu}")
            if not P.control_box.contains(v):
                raise DomainError(f"Needle value {v.tolist()} at t={t} lies outside the control set")
        return spike_list

    @property
    def N(self) -> int:
        return len(self.times)

    @property
    def delta(self) -> float:
        """Smallest positive gap between spike times, capped by the room left before T"""
        tol = Config.BREAKPOINT_DEDUP_RTOL * self.T
        gaps = [b - a for a, b in zip(self.times, self.times[1:]) if b - a > tol]
        return min(gaps + [self.T - self.times[-1]])

    def same_time(self, i: int, j: int) -> bool:
        return abs(self.times[i] - self.times[j]) <= Config.BREAKPOINT_DEDUP_RTOL * self.T


@dataclass(frozen=True, eq=False)
class NeedleVariation:
    """Amplitudes a >= 0 with |a|_1 <= delta(S) on a spike list"""
    spikes: SpikeList
    a: np.ndarray

    def __post_init__(self):
        a = _vec(self.a)
        if a.size != self.spikes.N:
            raise DomainError(f"{a.size} amplitudes for {self.spikes.N} spikes")
        if np.any(a < 0):
            raise DomainError("Needle amplitudes must be nonnegative")
        norm = float(np.sum(a))
        if norm > self.spikes.delta * (1 + 1e-12):
            raise DomainError(f"|a|_1 = {norm:.6g} exceeds delta(S) = {self.spikes.delta:.6g}")
        object.__setattr__(self, "a", a)

    @property
    def offsets(self) -> np.ndarray:
        """b_i = sum of a_j over earlier spikes j at the same time"""
        S = self.spikes
        return np.array([sum(self.a[j] for j in range(i) if S.same_time(i, j)) for i in range(S.N)])

    @property
    def intervals(self) -> List[Optional[Tuple[float, float]]]:
        """I_i(a) = [t_i + b_i, t_i + b_i + a_i[; None for widths below the empty threshold"""
        min_width = Config.NEEDLE_MIN_WIDTH_RTOL * self.spikes.T
        out = []
        for t, b, a in zip(self.spikes.times, self.offsets, self.a):
            out.append(None if a < min_width else (t + b, t + b + a))
        return out


def needle_control(u0: PiecewiseFn, nv: NeedleVariation) -> PiecewiseFn:
    """u0 with the value v_i on I_i(a); normalized-right"""
    active = [(iv, v) for iv, v in zip(nv.intervals, nv.spikes.values) if iv is not None]
    if not active:
        return u0
    T = u0.grid.T
    points = [p for (s, e), _ in active for p in (s, e)]
    grid = merge_grids(u0.grid, Grid.from_points(T, points))
    segments = []
    for a, b in grid.segments():
        mid = 0.5 * (a + b)
        hit = next((v for (s, e), v in active if s <= mid < e), None)
        segments.append((lambda t, v=hit: v.copy()) if hit is not None else u0.segment_covering(a, b))
    return PiecewiseFn(grid, segments)


def needle_mismatch(P: BolzaProblem, proc: Process, nv: NeedleVariation) -> PiecewiseFn:
    """f(t, x0, u_a) - f(t, x0, u0), supported on the needle intervals"""
    pi = proc.pi
    ua = needle_control(proc.u, nv)
    return compose(lambda t, x, va, v0: P.dynamics(t, x, va, pi) - P.dynamics(t, x, v0, pi), proc.x, ua, proc.u)


# ----------------------------------------------------------------------
# Resolvent of the linearized equation
# ----------------------------------------------------------------------


class Resolvent:
    """
    State-transition matrix R(t, s) = Y(t) Y(s)^-1 along a reference process

    Y solves Y' = D2 f(t, x0, u0, pi) Y, Y(0) = I, segment by segment.
    R(T, .) is cached on a dense grid when built.
    """

    def __init__(self, P: BolzaProblem, proc: Process, Y: PiecewiseC1Fn):
        self.problem = P
        self.process = proc
        self.Y = Y
        self.n = P.n
        self._lock = threading.Lock()
        self._warned = False
        self._Y_T = self.matrix(P.T)
        self._terminal_cache = {}
        for t, _ in Y.grid.sample_times(max(2, Config.RESOLVENT_CACHE_POINTS // Y.grid.n_segments)):
            self._terminal_cache[t] = self._solve_right(self._Y_T, t)

    def matrix(self, t: float) -> np.ndarray:
        return self.Y.eval(t).reshape(self.n, self.n)

    def _solve_right(self, M: np.ndarray, s: float) -> np.ndarray:
        """M Y(s)^-1 through an LU factorization of Y(s)"""
        Ys = self.matrix(s)
        if np.linalg.cond(Ys) > Config.RESOLVENT_COND_WARN:
            with self._lock:
                if not self._warned:
                    self._warned = True
                    ColoredOutput.warning(f"Resolvent inversion ill-conditioned at s={s:.6g}")
        lu_piv = lu_factor(Ys)
        return lu_solve(lu_piv, M.T, trans=1).T

    def __call__(self, t: float, s: float) -> np.ndarray:
        if t == s:
            return np.eye(self.n)
        if t == self.problem.T and s in self._terminal_cache:
            return self._terminal_cache[s].copy()
        return self._solve_right(self.matrix(t), s)

    def terminal(self, s: float) -> np.ndarray:
        return self(self.problem.T, s)


def _state_jacobian_field(P: BolzaProblem, proc: Process,
                          grid: Optional[Grid] = None) -> Tuple[Grid, List[Callable]]:
    """Per-segment callables t -> D2 f(t, x0(t), u0(t), pi) on the process grid or a refinement"""
    grid = proc.grid if grid is None else grid
    pi = proc.pi
    fields = []
    for a, b in grid.segments():
        xs, us = proc.x.segment_covering(a, b), proc.u.segment_covering(a, b)
        fields.append(lambda t, xs=xs, us=us: P.state_jacobian(t, _vec(xs(t)), _vec(us(t)), pi))
    return grid, fields


def resolvent_build(P: BolzaProblem, proc: Process) -> Resolvent:
    """Fundamental matrix of the linearized equation along proc"""
    n = P.n
    grid, jacobians = _state_jacobian_field(P, proc)
    state = np.eye(n).reshape(-1)
    segments, derivatives = [], []
    for A, (a, b) in zip(jacobians, grid.segments()):
        rhs = lambda t, y, A=A: (A(t) @ y.reshape(n, n)).reshape(-1)
        yseg = ode_segment(rhs, a, b, state, None)
        segments.append(yseg)
        derivatives.append(lambda t, yseg=yseg, A=A: (A(t) @ _vec(yseg(t)).reshape(n, n)).reshape(-1))
        state = yseg(b)
    return Resolvent(P, proc, PiecewiseC1Fn(grid, segments, derivatives))


def linearized_inhomogeneous(P: BolzaProblem, proc: Process, nv: NeedleVariation, method: str = "variation",
                             resolvent: Optional[Resolvent] = None) -> PiecewiseC1Fn:
    """
    z' = D2 f(t, x0, u0) z + f(t, x0, u_a) - f(t, x0, u0), z(0) = 0

    method "variation" uses z(t) = Y(t) * integral of Y(s)^-1 Delta(s);
    method "direct" integrates the inhomogeneous equation.
    """
    n = P.n
    mismatch = needle_mismatch(P, proc, nv)
    grid = merge_grids(mismatch.grid, proc.grid)
    _, jac_segments = _state_jacobian_field(P, proc, grid)
    delta_segments = [mismatch.segment_covering(a, b) for a, b in grid.segments()]

    if method == "direct":
        state = np.zeros(n)
        segments, derivatives = [], []
        for A, D, (a, b) in zip(jac_segments, delta_segments, grid.segments()):
            rhs = lambda t, z, A=A, D=D: A(t) @ z + _vec(D(t))
            zseg = ode_segment(rhs, a, b, state, None)
            segments.append(zseg)
            derivatives.append(lambda t, zseg=zseg, A=A, D=D: A(t) @ _vec(zseg(t)) + _vec(D(t)))
            state = zseg(b)
        return PiecewiseC1Fn(grid, segments, derivatives)
    if method != "variation":
        raise DomainError(f"Unknown method '{method}', expected 'variation' or 'direct'")

    R = resolvent if resolvent is not None else resolvent_build(P, proc)
    Y = R.Y
    pulled_back = compose(lambda t, y, d: solve(y.reshape(n, n), d), Y, mismatch, grid=grid)
    w = antiderivative(pulled_back, np.zeros(n))
    segments, derivatives = [], []
    for A, D, (a, b) in zip(jac_segments, delta_segments, grid.segments()):
        ys, ws = Y.segment_covering(a, b), w.segment_covering(a, b)
        zseg = lambda t, ys=ys, ws=ws: _vec(ys(t)).reshape(n, n) @ _vec(ws(t))
        segments.append(zseg)
        derivatives.append(lambda t, zseg=zseg, A=A, D=D: A(t) @ zseg(t) + _vec(D(t)))
    return PiecewiseC1Fn(grid, segments, derivatives)


def first_order_map(P: BolzaProblem, proc: Process, S: SpikeList,
                    resolvent: Optional[Resolvent] = None) -> np.ndarray:
    """Columns R(T, t_i) [f(t_i, x0, v_i) - f(t_i, x0, u0(t_i))]"""
    R = resolvent if resolvent is not None else resolvent_build(P, proc)
    pi = proc.pi
    columns = []
    for t, v in zip(S.times, S.values):
        x = proc.x.eval(t)
        jump = P.dynamics(t, x, v, pi) - P.dynamics(t, x, proc.u.eval(t), pi)
        columns.append(R.terminal(t) @ jump)
    return np.column_stack(columns) if columns else np.zeros((P.n, 0))


# ----------------------------------------------------------------------
# Lipschitz propagation and residual studies
# ----------------------------------------------------------------------


@dataclass
class GronwallConstants:
    """Mismatch bound k, state Lipschitz bound L and k1 = k exp(L T)"""
    k: float
    L: float
    k1: float


def gronwall_constant(P: BolzaProblem, proc: Process, S: SpikeList) -> GronwallConstants:
    """
    Measure k and L along the reference process

    k is the largest needle mismatch over the window [t_i, t_i + delta(S)];
    L is the largest spectral norm of D2 f over the grid, for u0 and every v_i.
    """
    pi = proc.pi
    window = S.delta
    k = 0.0
    for t_i, v in zip(S.times, S.values):
        for t in np.linspace(t_i, min(P.T, t_i + window), Config.NORM_SAMPLES_PER_SEGMENT):
            x = proc.x.eval(t)
            k = max(k, float(np.linalg.norm(P.dynamics(t, x, v, pi) - P.dynamics(t, x, proc.u.eval(t), pi))))
    L = 0.0
    for t, _ in proc.grid.sample_times(Config.NORM_SAMPLES_PER_SEGMENT):
        x = proc.x.eval(t)
        for zeta in [proc.u.eval(t)] + list(S.values):
            L = max(L, float(np.linalg.norm(P.state_jacobian(t, x, zeta, pi), 2)))
    return GronwallConstants(k=k, L=L, k1=k * math.exp(L * P.T))


def amplitude_guard(P: BolzaProblem, proc: Process, S: SpikeList,
                    a: Any) -> Tuple[np.ndarray, PiecewiseC1Fn, int]:
    """Halve a until the perturbed trajectory integrates; returns (a, x_a, halvings)"""
    a = _vec(a)
    for halvings in range(Config.GUARD_MAX_HALVINGS + 1):
        try:
            nv = NeedleVariation(S, a)
            return a, integrate_cauchy(P, needle_control(proc.u, nv), proc.pi), halvings
        except IntegrationError as exc:
            ColoredOutput.warning(f"Needle amplitude |a|_1={np.sum(np.abs(a)):.3e} left the guard ({exc}); halving")
            a = 0.5 * a
    raise IntegrationError("No needle amplitude found inside the integration guard")


def expansion_residual_study(P: BolzaProblem, proc: Process, S: SpikeList,
                             amplitudes: Sequence[Any]) -> ResidualStudy:
    """
    Residual of x_a(T) = x0(T) + L a + |a|_1 rho(a) along a list of amplitudes

    Rows are computed concurrently and kept in input order. An amplitude
    whose trajectory leaves the integration guard is halved until it fits,
    and the row records both norms; a row that still fails is marked
    instead of aborting the study.
    """
    R = resolvent_build(P, proc)
    L_map = first_order_map(P, proc, S, R)
    x0_T = proc.x.eval(P.T)
    constants = gronwall_constant(P, proc, S)

    def row(a):
        a = _vec(a)
        norm = float(np.sum(np.abs(a)))
        if norm == 0.0:
            return ResidualRow(0.0, None, None, "zero-amplitude")
        try:
            a_used, xa, halvings = amplitude_guard(P, proc, S, a)
            used = float(np.sum(np.abs(a_used)))
            rho = (xa.eval(P.T) - x0_T - L_map @ a_used) / used
            ratio = sup_norm(linear_combination((1.0, -1.0), (xa, proc.x))) / used
            return ResidualRow(used, float(np.linalg.norm(rho)), ratio, "ok", requested_a1=norm, halvings=halvings)
        except (IntegrationError, NumericError, DomainError) as exc:
            return ResidualRow(norm, None, None, f"failed: {exc}", requested_a1=norm)

    rows = ordered_map(row, amplitudes)
    study = ResidualStudy(rows=rows, order=None, k1=constants.k1, first_order_map=L_map)
    fit = [(r.norm_a1, r.residual_norm) for r in study.successful if r.residual_norm and r.residual_norm > 0]
    if len(fit) >= 2:
        xs, ys = np.log([f[0] for f in fit]), np.log([f[1] for f in fit])
        study.order = float(np.polyfit(xs, ys, 1)[0])
    return study


def geometric_amplitudes(base: Any, levels: int, ratio: float) -> List[np.ndarray]:
    """base, base/ratio, base/ratio^2, ..."""
    base = _vec(base)
    return [base / ratio ** k for k in range(levels)]
