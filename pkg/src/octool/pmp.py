"""
Maximum-principle machinery

Adjoint integration, terminal multipliers, qualification diagnostics,
certificate verification for Bolza and Mayer problems, and an indirect
shooting solver for smooth problems with interior controls.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, nnls

from .concurrency import ordered_map
from .config import Config, Tolerances
from .errors import (IntegrationError, LIViolatedError, NoConvergenceError, NumericError,
                     SignConditionError, UnsupportedProblemError)
from .flow import ode_segment
from .models import (AdjointPath, ConditionResult, Multipliers, NonvanishingReport, PMPCertificate,
                     QualificationReport, ShootingResult, SurjectivityReport, Verdict)
from .piecewise import Grid, PiecewiseC1Fn, PiecewiseFn, compose
from .problem import BolzaProblem, Hamiltonian, Process, augment_to_mayer, criterion, lift_process


def _vec(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


def _singular_values(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def _numerical_rank(singular_values: np.ndarray, rtol: float) -> int:
    if singular_values.size == 0 or singular_values[0] <= 0:
        return 0
    return int(np.sum(singular_values > rtol * singular_values[0]))


# ----------------------------------------------------------------------
# Adjoint
# ----------------------------------------------------------------------


def adjoint_backward(P: BolzaProblem, proc: Process, lambda0: float, pT: Any) -> AdjointPath:
    """
    Integrate p' = -lambda0 D2 f0^T - D2 f^T p backward from p(T) = pT

    Restarts at every breakpoint of the process grid.
    """
    grid = proc.grid
    pi = proc.pi
    H = Hamiltonian(P, float(lambda0))
    state = _vec(pT)
    if state.size != P.n:
        raise NumericError(f"Terminal covector has {state.size} entries, state_dim is {P.n}")
    segments: List[Callable] = [None] * grid.n_segments
    derivatives: List[Callable] = [None] * grid.n_segments
    for i in reversed(range(grid.n_segments)):
        a, b = grid.breakpoints[i], grid.breakpoints[i + 1]
        xs, us = proc.x.segment_covering(a, b), proc.u.segment_covering(a, b)

        def rhs(t, p, xs=xs, us=us):
            return -H.grad_x(t, _vec(xs(t)), _vec(us(t)), p, pi)

        pseg = ode_segment(rhs, b, a, state, None)
        segments[i] = pseg
        derivatives[i] = lambda t, pseg=pseg, rhs=rhs: rhs(t, _vec(pseg(t)))
        state = pseg(a)
    return AdjointPath(PiecewiseC1Fn(grid, segments, derivatives), float(lambda0))


# ----------------------------------------------------------------------
# Multipliers
# ----------------------------------------------------------------------


@dataclass
class TerminalSystem:
    """Stationarity system of the Hamiltonian in the control at t = T"""
    family: np.ndarray       # rows D1 g_i . D3 f (i = 1..m), then D1 h_j . D3 f
    reward_row: np.ndarray   # D1 g0 . D3 f + D3 f0
    slacks: np.ndarray       # g_i(x(T), pi), i = 1..m
    gx: np.ndarray
    hx: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        return -self.reward_row


def terminal_system(P: BolzaProblem, proc: Process) -> TerminalSystem:
    T, pi = P.T, proc.pi
    x_T, u_T = proc.x.eval(T), proc.u.eval(T)
    f_u = P.control_jacobian(T, x_T, u_T, pi)
    f0_u = _vec(P.derivs.f0_u(T, x_T, u_T, pi))
    gx, hx = P.terminal_gradients(x_T, pi)
    g, _ = P.terminal_values(x_T, pi)
    family = np.vstack([gx[1:] @ f_u, hx @ f_u]).reshape(P.m + P.q, P.mu)
    return TerminalSystem(family=family, reward_row=gx[0] @ f_u + f0_u, slacks=g[1:], gx=gx, hx=hx)


def _inactive(system: TerminalSystem, tol: Tolerances) -> np.ndarray:
    return system.slacks > tol.active_set


def solve_multipliers_LI(P: BolzaProblem, proc: Process, tol: Optional[Tolerances] = None) -> Multipliers:
    """
    lambda0 = 1 multipliers from stationarity of H in the control at T

    Solves sum lambda_i e_i + sum mu_j e_{m+j} = -(D1 g0 . D3 f + D3 f0) in the
    least-squares sense; inactive inequality constraints keep lambda_i = 0.
    """
    tol = tol or Tolerances()
    system = terminal_system(P, proc)
    m, q = P.m, P.q
    E = system.family
    sv = _singular_values(E)
    if m + q > 0 and _numerical_rank(sv, tol.rank_rtol) < m + q:
        raise LIViolatedError(f"Terminal gradient family has rank {_numerical_rank(sv, tol.rank_rtol)} < {m + q}",
                              singular_values=sv.tolist())
    keep = np.concatenate([~_inactive(system, tol), np.ones(q, dtype=bool)])
    rhs = system.rhs
    coeffs = np.zeros(m + q)
    if keep.any():
        solution, *_ = np.linalg.lstsq(E[keep].T, rhs, rcond=None)
        coeffs[keep] = solution
    residual = float(np.linalg.norm(E.T @ coeffs - rhs)) if m + q else float(np.linalg.norm(rhs))
    if residual > tol.stationarity * (1.0 + np.linalg.norm(rhs)):
        raise NumericError(f"Control stationarity at T fails: residual {residual:.3e}")
    lambdas = coeffs[:m]
    if np.any(lambdas < -tol.sign):
        raise SignConditionError(f"Negative inequality multiplier(s) {lambdas[lambdas < -tol.sign].tolist()}",
                                 values=lambdas.tolist())
    return Multipliers(np.concatenate(([1.0], lambdas)), coeffs[m:], normalized=True, regime="LI", nullity=1)


def _sphere_multipliers(P: BolzaProblem, proc: Process, tol: Tolerances) -> Optional[Multipliers]:
    """Null vector of the full stationarity system, |(lambda, mu)|_1 = 1"""
    system = terminal_system(P, proc)
    m, q = P.m, P.q
    active = ~_inactive(system, tol)
    columns = [system.reward_row] + [row for row, on in zip(system.family[:m], active) if on] + list(system.family[m:])
    M = np.column_stack(columns).reshape(P.mu, len(columns))
    if M.size == 0:
        sv, vt = np.zeros(0), np.eye(len(columns))
    else:
        _, sv, vt = np.linalg.svd(M)
    scale = max(sv[0] if sv.size else 0.0, 1.0)
    rank = int(np.sum(sv > tol.rank_rtol * scale))
    nullity = M.shape[1] - rank
    if nullity == 0:
        return None
    vector = vt[-1]
    vector = vector / np.sum(np.abs(vector))
    first = next((v for v in vector if abs(v) > tol.sign), 1.0)
    vector = vector if first > 0 else -vector
    lambdas = np.zeros(m + 1)
    lambdas[0] = vector[0]
    lambdas[1:][active] = vector[1:1 + int(active.sum())]
    mus = vector[1 + int(active.sum()):]
    return Multipliers(lambdas, mus, normalized=False, regime="sphere", nullity=nullity)


def solve_multipliers(P: BolzaProblem, proc: Process, tol: Optional[Tolerances] = None) -> Multipliers:
    """
    (LI) route when it succeeds, otherwise the sphere-normalized null space

    Nullity above one means the multipliers are not unique.
    """
    tol = tol or Tolerances()
    try:
        return solve_multipliers_LI(P, proc, tol)
    except (LIViolatedError, SignConditionError, NumericError):
        pass
    sphere = _sphere_multipliers(P, proc, tol)
    if sphere is not None:
        return sphere
    # no nontrivial solution: keep lambda0 = 1 and let the verdicts report the failure
    system = terminal_system(P, proc)
    coeffs = np.zeros(P.m + P.q)
    if P.m + P.q:
        coeffs, *_ = np.linalg.lstsq(system.family.T, system.rhs, rcond=None)
    return Multipliers(np.concatenate(([1.0], coeffs[:P.m])), coeffs[P.m:], normalized=False,
                       regime="least-squares", nullity=0)


def transversality_terminal(P: BolzaProblem, proc: Process, mult: Multipliers) -> np.ndarray:
    """p(T) = sum lambda_alpha D1 g_alpha + sum mu_beta D1 h_beta"""
    gx, hx = P.terminal_gradients(proc.x.eval(P.T), proc.pi)
    return gx.T @ _vec(mult.lambdas) + hx.T @ _vec(mult.mus)


# ----------------------------------------------------------------------
# Qualification
# ----------------------------------------------------------------------


def check_qualification(P: BolzaProblem, proc: Process, mode: str, tol: Optional[Tolerances] = None) -> QualificationReport:
    """
    Rank / positive-independence diagnostics at the terminal state

    QC0 and QC1 ask that no nonnegative combination of the active terminal
    gradients g_alpha (alpha >= i) plus any combination of the D h_beta vanish
    unless it is trivial. LI asks that the family composed with D3 f at T be
    linearly free.
    """
    tol = tol or Tolerances()
    mode = mode.upper()
    m, q = P.m, P.q
    if mode == "LI":
        E = terminal_system(P, proc).family
        if m + q == 0:
            return QualificationReport("LI", True, detail="no terminal constraints")
        sv = _singular_values(E)
        rank = _numerical_rank(sv, tol.rank_rtol)
        return QualificationReport("LI", rank == m + q, sv.tolist(), rank, m + q)
    if mode not in ("QC0", "QC1"):
        raise ValueError(f"Unknown qualification mode '{mode}'")

    start = 0 if mode == "QC0" else 1
    x_T = proc.x.eval(P.T)
    gx, hx = P.terminal_gradients(x_T, proc.pi)
    g, _ = P.terminal_values(x_T, proc.pi)
    active = [a for a in range(start, m + 1) if a == 0 or abs(g[a]) <= tol.active_set]
    family = np.vstack([gx[active], hx]) if (active or q) else np.zeros((0, P.n))
    sv = _singular_values(family)
    if not active and q == 0:
        return QualificationReport(mode, True, [], 0, 0, [], detail="no active terminal gradients")

    h_rank = _numerical_rank(_singular_values(hx), tol.rank_rtol)
    if h_rank < q:
        return QualificationReport(mode, False, sv.tolist(), _numerical_rank(sv, tol.rank_rtol), len(active) + q,
                                   active, detail="equality gradients linearly dependent")
    if not active:
        return QualificationReport(mode, True, sv.tolist(), h_rank, q, active)

    # project the inequality gradients off span(D h) and look for c >= 0, sum c = 1, sum c_a Q g_a = 0
    projector = np.eye(P.n) - (np.linalg.pinv(hx) @ hx if q else 0.0)
    columns = []
    for a in active:
        scale = np.linalg.norm(gx[a])
        columns.append(projector @ gx[a] / scale if scale > 0 else np.zeros(P.n))
    A = np.vstack([np.column_stack(columns), np.ones((1, len(active)))])
    b = np.concatenate([np.zeros(P.n), [1.0]])
    _, residual = nnls(A, b)
    passed = residual > tol.stationarity
    return QualificationReport(mode, bool(passed), sv.tolist(), _numerical_rank(sv, tol.rank_rtol),
                               len(active) + q, active, residual=float(residual),
                               detail="" if passed else "nontrivial nonnegative combination vanishes")


# ----------------------------------------------------------------------
# Certificate verification
# ----------------------------------------------------------------------


def _collocation_times(grid: Grid) -> List[Tuple[float, float]]:
    """Interior points of every segment with a safe central-difference step"""
    out = []
    k = Config.COLLOCATION_POINTS
    for a, b in grid.segments():
        step = min(Config.COLLOCATION_STEP, (b - a) / (4 * k))
        for j in range(k):
            out.append((a + (b - a) * (j + 0.5) / k, step))
    return out


def _mp_times(grid: Grid) -> List[Tuple[float, int]]:
    return grid.sample_times(Config.MP_TIME_SAMPLES)


def _control_grid(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    mu = lower.size
    per_dim = Config.MP_GRID_PER_DIM
    while per_dim > 2 and per_dim ** mu > Config.MP_MAX_GRID_POINTS:
        per_dim -= 1
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(lower, upper)]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(mu, -1).T


def _maximum_gap(P: BolzaProblem, H: Hamiltonian, t: float, x, u0, p, pi, rng: np.random.Generator):
    """Largest H(zeta) - H(u0) found by grid scan plus multistart ascent"""
    base = H.value(t, x, u0, p, pi)
    lower, upper = P.control_box.search_box(u0)
    best_gap, best_zeta = 0.0, u0
    candidates = _control_grid(lower, upper)
    values = np.array([H.value(t, x, z, p, pi) for z in candidates])
    top = int(np.argmax(values))
    if values[top] - base > best_gap:
        best_gap, best_zeta = float(values[top] - base), candidates[top]

    starts = [candidates[top]] + [rng.uniform(lower, upper) for _ in range(Config.MP_MULTISTARTS)]
    bounds = list(zip(lower, upper))
    for start in starts:
        result = minimize(lambda z: -H.value(t, x, z, p, pi), start,
                          jac=lambda z: -H.grad_u(t, x, z, p, pi),
                          method="L-BFGS-B", bounds=bounds)
        zeta = np.clip(result.x, lower, upper)
        if not P.control_box.contains(zeta):
            continue
        gap = H.value(t, x, zeta, p, pi) - base
        if gap > best_gap:
            best_gap, best_zeta = float(gap), zeta
    return best_gap, best_zeta


def _check_maximum(P: BolzaProblem, proc: Process, adjoint: AdjointPath, tol: Tolerances, seed: int) -> ConditionResult:
    if P.mu == 0:
        return ConditionResult.judge("MP", 0.0, tol.certificate, "no control")
    H = Hamiltonian(P, adjoint.lambda0)
    grid = Grid.from_points(P.T, proc.grid.breakpoints + adjoint.p.grid.breakpoints)
    samples = _mp_times(grid)
    pi = proc.pi

    def gap_at(item):
        index, (t, seg) = item
        a, b = grid.breakpoints[seg], grid.breakpoints[seg + 1]
        x = _vec(proc.x.segment_covering(a, b)(t))
        u0 = _vec(proc.u.segment_covering(a, b)(t))
        p = _vec(adjoint.p.segment_covering(a, b)(t))
        rng = np.random.default_rng([seed, index])
        return _maximum_gap(P, H, t, x, u0, p, pi, rng)

    gaps = ordered_map(gap_at, list(enumerate(samples)))
    worst = int(np.argmax([g for g, _ in gaps]))
    gap, zeta = gaps[worst]
    if gap <= tol.certificate:
        return ConditionResult.judge("MP", gap, tol.certificate, "no counterexample found", samples[worst][0])
    return ConditionResult.judge("MP", gap, tol.certificate, f"ascent found at zeta={_vec(zeta).tolist()}",
                                 samples[worst][0])


def hamiltonian_path(P: BolzaProblem, proc: Process, adjoint: AdjointPath) -> PiecewiseFn:
    """t -> H(t, x(t), u(t), p(t), lambda0)"""
    H = Hamiltonian(P, adjoint.lambda0)
    pi = proc.pi
    return compose(lambda t, x, u, p: H.value(t, x, u, p, pi), proc.x, proc.u, adjoint.p)


def verify_certificate(P: BolzaProblem, proc: Process, multipliers: Optional[Multipliers] = None,
                       adjoint: Optional[AdjointPath] = None, tol: Optional[Tolerances] = None,
                       seed: int = Config.DEFAULT_SEED, check_dH: bool = True) -> PMPCertificate:
    """
    Check every maximum-principle condition along proc

    Failures are verdicts; nothing here raises for a violated condition.
    """
    tol = tol or Tolerances()
    pi = proc.pi
    if multipliers is None:
        multipliers = solve_multipliers(P, proc, tol)
    if adjoint is None:
        adjoint = adjoint_backward(P, proc, multipliers.lambda0, transversality_terminal(P, proc, multipliers))
    lambdas, mus = _vec(multipliers.lambdas), _vec(multipliers.mus)
    x_T = proc.x.eval(P.T)
    g, _ = P.terminal_values(x_T, pi)
    conditions: Dict[str, ConditionResult] = {}

    size = float(max(np.max(np.abs(lambdas)), np.max(np.abs(mus)) if mus.size else 0.0))
    conditions["NN"] = ConditionResult("NN", size, tol.sign, Verdict.PASS if size > tol.sign else Verdict.FAIL,
                                       "largest multiplier magnitude")
    conditions["Si"] = ConditionResult.judge("Si", max(0.0, float(-np.min(lambdas))), tol.sign)
    slack = float(np.max(np.abs(lambdas[1:] * g[1:]))) if P.m else 0.0
    conditions["Sl"] = ConditionResult.judge("Sl", slack, tol.certificate)
    tc = float(np.linalg.norm(transversality_terminal(P, proc, multipliers) - adjoint.terminal))
    conditions["TC"] = ConditionResult.judge("TC", tc, tol.certificate)

    H = Hamiltonian(P, adjoint.lambda0)
    ae, ae_at = 0.0, None
    for t, h in _collocation_times(Grid.from_points(P.T, proc.grid.breakpoints + adjoint.p.grid.breakpoints)):
        dp = (adjoint.p.eval(t + h) - adjoint.p.eval(t - h)) / (2 * h)
        res = float(np.linalg.norm(dp + H.grad_x(t, proc.x.eval(t), proc.u.eval(t), adjoint.p.eval(t), pi)))
        if res > ae:
            ae, ae_at = res, t
    conditions["AE"] = ConditionResult.judge("AE", ae, tol.certificate, "central-difference collocation", ae_at)

    conditions["MP"] = _check_maximum(P, proc, adjoint, tol, seed)

    hbar = hamiltonian_path(P, proc, adjoint)
    jumps = hbar.jumps()
    ch = float(np.max(jumps)) if jumps.size else 0.0
    conditions["CH"] = ConditionResult.judge("CH", ch, tol.certificate, "largest Hamiltonian jump")

    if check_dH:
        dh, dh_at = 0.0, None
        for t, h in _collocation_times(hbar.grid):
            slope = (hbar.eval(t + h)[0] - hbar.eval(t - h)[0]) / (2 * h)
            res = abs(slope - H.partial_t(t, proc.x.eval(t), proc.u.eval(t), adjoint.p.eval(t), pi))
            if res > dh:
                dh, dh_at = res, t
        conditions["dH"] = ConditionResult.judge("dH", dh, tol.certificate, "dH/dt against partial_t H", dh_at)
    else:
        conditions["dH"] = ConditionResult.skipped("dH", tol.certificate, "not requested")

    qualification = {mode: check_qualification(P, proc, mode, tol) for mode in ("QC0", "QC1", "LI")}
    degenerate = multipliers.degenerate or size <= tol.sign
    return PMPCertificate(multipliers, adjoint, conditions, qualification, tol.as_dict(), degenerate)


@dataclass
class MayerVerification:
    """Mayer certificate, the drift of sigma's adjoint and its distance to the direct certificate"""
    certificate: PMPCertificate
    sigma_adjoint: float
    sigma_drift: float
    multiplier_deviation: float
    adjoint_deviation: float
    value_deviation: float

    @property
    def max_deviation(self) -> float:
        return max(self.multiplier_deviation, self.adjoint_deviation, self.value_deviation)

    def agrees(self, tol: float) -> bool:
        return self.max_deviation <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {'certificate': self.certificate.to_dict(), 'sigma_adjoint': self.sigma_adjoint,
                'sigma_drift': self.sigma_drift, 'multiplier_deviation': self.multiplier_deviation,
                'adjoint_deviation': self.adjoint_deviation, 'value_deviation': self.value_deviation}


def verify_mayer(P: BolzaProblem, proc: Process, tol: Optional[Tolerances] = None,
                 seed: int = Config.DEFAULT_SEED, direct: Optional[PMPCertificate] = None) -> MayerVerification:
    """
    Verify on augment_to_mayer(P) and compare with the certificate of P itself

    sigma's adjoint must stay constant at lambda0, the multipliers must match,
    the x-block of the Mayer adjoint must match the Bolza adjoint, and the
    Mayer terminal reward must equal the Bolza criterion.
    """
    mayer = augment_to_mayer(P)
    lifted = lift_process(P, proc)
    cert = verify_certificate(mayer, lifted, tol=tol, seed=seed)
    if direct is None:
        direct = verify_certificate(P, proc, tol=tol, seed=seed)

    samples = cert.adjoint.p.samples(Config.COLLOCATION_POINTS)
    terminal = float(cert.adjoint.terminal[0])
    drift = float(max(abs(value[0] - terminal) for _, _, value in samples))

    m_lift, m_direct = cert.multipliers, direct.multipliers
    multiplier_deviation = float(max(np.max(np.abs(m_lift.lambdas - m_direct.lambdas), initial=0.0),
                                     np.max(np.abs(m_lift.mus - m_direct.mus), initial=0.0)))
    adjoint_deviation = float(max(np.max(np.abs(_vec(value)[1:] - _vec(direct.adjoint.p.eval(t, side))))
                                  for t, side, value in samples))
    value_deviation = abs(criterion(mayer, lifted) - criterion(P, proc))
    return MayerVerification(cert, terminal, drift, multiplier_deviation, adjoint_deviation, value_deviation)


# ----------------------------------------------------------------------
# Scans
# ----------------------------------------------------------------------


def _scan_times(grid: Grid) -> List[float]:
    times = set(np.linspace(0.0, grid.T, Config.SCAN_TIME_POINTS).tolist())
    times.update(grid.breakpoints)
    return sorted(times)


def nonvanishing_scan(cert: PMPCertificate, mode: str = "pair") -> NonvanishingReport:
    """Minimum over t of max(lambda0, |p(t)|) (mode pair) or |p(t)| (mode p)"""
    if mode not in ("pair", "p"):
        raise ValueError(f"Unknown nonvanishing mode '{mode}'")
    p = cert.adjoint.p
    lambda0 = abs(cert.adjoint.lambda0)
    best, where = np.inf, 0.0
    for t in _scan_times(p.grid):
        for side in ("left", "right"):
            size = float(np.linalg.norm(p.eval(t, side)))
            value = max(lambda0, size) if mode == "pair" else size
            if value < best:
                best, where = value, t
    return NonvanishingReport(mode, float(best), float(where), degenerate=best <= 1e-14)


def surjectivity_scan(P: BolzaProblem, proc: Process, tol: Optional[Tolerances] = None) -> SurjectivityReport:
    """Rank of D3 f along a t-grid; full row rank times are candidates"""
    tol = tol or Tolerances()
    times, ranks = [], []
    for t in _scan_times(proc.grid):
        J = P.control_jacobian(t, proc.x.eval(t), proc.u.eval(t), proc.pi)
        rank = _numerical_rank(_singular_values(J), tol.rank_rtol)
        times.append(float(t))
        ranks.append(rank)
    candidates = [t for t, r in zip(times, ranks) if r == P.n]
    return SurjectivityReport(times, ranks, candidates, P.n)


# ----------------------------------------------------------------------
# Indirect shooting
# ----------------------------------------------------------------------


class _ControlRecovery:
    """Pointwise maximizer of H in the control"""

    def __init__(self, P: BolzaProblem, pi: np.ndarray, lambda0: float = 1.0):
        self.P = P
        self.pi = pi
        self.H = Hamiltonian(P, lambda0)
        self.lambda0 = lambda0
        lower, upper = P.control_box.lower, P.control_box.upper
        self.bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
                       for lo, hi in zip(lower, upper)]

    def __call__(self, t: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        P = self.P
        if P.control_law is not None:
            return _vec(P.control_law(t, x, p, self.lambda0, self.pi))
        start = P.control_box.center()
        result = minimize(lambda z: -self.H.value(t, x, z, p, self.pi), start,
                          jac=lambda z: -self.H.grad_u(t, x, z, p, self.pi),
                          method="L-BFGS-B", bounds=self.bounds, options={"gtol": 1e-12, "ftol": 1e-15})
        return _vec(result.x)


def _check_concavity(P: BolzaProblem, recovery: _ControlRecovery, pi: np.ndarray,
                     states: Sequence[Tuple[float, np.ndarray, np.ndarray]]) -> None:
    """Second differences of H in each control direction must be negative at every (t, x, p)"""
    h = Config.CONCAVITY_STEP
    for t, x, p in states:
        zeta = recovery(t, x, p)
        centre = recovery.H.value(t, x, zeta, p, pi)
        for k in range(P.mu):
            e = np.zeros(P.mu)
            e[k] = h
            second = (recovery.H.value(t, x, zeta + e, p, pi) - 2 * centre
                      + recovery.H.value(t, x, zeta - e, p, pi))
            if second >= -Config.CONCAVITY_EPS:
                raise UnsupportedProblemError(
                    f"Hamiltonian is not strictly concave in u{k + 1} at t={t:.6g} (second difference {second:.3e})")


def _trajectory_states(P: BolzaProblem, trajectory: Callable) -> List[Tuple[float, np.ndarray, np.ndarray]]:
    states = []
    for t in np.linspace(0.0, P.T, Config.CONCAVITY_SAMPLES):
        y = _vec(trajectory(t))
        states.append((float(t), y[:P.n], y[P.n:]))
    return states


def _shoot(P: BolzaProblem, pi: np.ndarray, recovery: _ControlRecovery, z: np.ndarray):
    """Integrate (x, p) forward from (xi0, p0); returns the state-adjoint evaluator"""
    n = P.n
    H = recovery.H
    bound = Config.BLOWUP_BOUND

    def rhs(t, y):
        x, p = y[:n], y[n:]
        u = recovery(t, x, p)
        return np.concatenate((P.dynamics(t, x, u, pi), -H.grad_x(t, x, u, p, pi)))

    def guard(t, y):
        return bound - np.linalg.norm(y)
    guard.terminal = True
    guard.direction = -1

    y0 = np.concatenate((P.xi0, z[:n]))
    return ode_segment(rhs, 0.0, P.T, y0, guard)


def _terminal_residual(P: BolzaProblem, pi: np.ndarray, trajectory: Callable, z: np.ndarray) -> np.ndarray:
    n = P.n
    y_T = _vec(trajectory(P.T))
    x_T, p_T = y_T[:n], y_T[n:]
    mus = z[n:]
    gx, hx = P.terminal_gradients(x_T, pi)
    _, h = P.terminal_values(x_T, pi)
    return np.concatenate((h, p_T - gx[0] - hx.T @ mus))


def _shooting_residual(P: BolzaProblem, pi: np.ndarray, recovery: _ControlRecovery, z: np.ndarray) -> np.ndarray:
    return _terminal_residual(P, pi, _shoot(P, pi, recovery, z), z)


def _safe_norm(P, pi, recovery, z) -> float:
    try:
        return float(np.linalg.norm(_shooting_residual(P, pi, recovery, z)))
    except (IntegrationError, NumericError):
        return np.inf


def shooting_solve(P: BolzaProblem, pi: Optional[Any] = None, guess: Optional[Tuple[Any, Any]] = None,
                   tol: Optional[Tolerances] = None, max_iter: int = Config.SHOOTING_MAX_ITER) -> ShootingResult:
    """
    Newton iteration on (p(0), mu) -> (h(x(T)), p(T) - transversality target)

    The control is recovered pointwise as the maximizer of H with lambda0 = 1;
    H must be strictly concave in the control along every accepted iterate.
    Inequality constraints are assumed inactive and checked at the end.
    """
    tol = tol or Tolerances()
    pi = P.params(pi)
    n, q = P.n, P.q
    p0 = np.zeros(n) if guess is None or guess[0] is None else _vec(guess[0])
    mu0 = np.zeros(q) if guess is None or guess[1] is None else _vec(guess[1])
    z = np.concatenate((p0, mu0))
    recovery = _ControlRecovery(P, pi)
    _check_concavity(P, recovery, pi, [(0.0, P.xi0, p0)])

    def accept(z):
        trajectory = _shoot(P, pi, recovery, z)
        _check_concavity(P, recovery, pi, _trajectory_states(P, trajectory))
        return _terminal_residual(P, pi, trajectory, z)

    history: List[float] = []
    iterations = 0
    residual = accept(z)
    while True:
        norm = float(np.linalg.norm(residual))
        history.append(norm)
        if norm <= tol.shooting:
            break
        if iterations >= max_iter:
            raise NoConvergenceError(f"Shooting did not converge in {max_iter} iterations", history)
        iterations += 1
        J = np.zeros((residual.size, z.size))
        for k in range(z.size):
            step = Config.SHOOTING_FD_STEP * (1.0 + abs(z[k]))
            e = np.zeros_like(z)
            e[k] = step
            J[:, k] = (_shooting_residual(P, pi, recovery, z + e) - _shooting_residual(P, pi, recovery, z - e)) / (2 * step)
        direction, *_ = np.linalg.lstsq(J, -residual, rcond=None)
        t = 1.0
        while t >= Config.ARMIJO_MIN_STEP:
            trial_norm = _safe_norm(P, pi, recovery, z + t * direction)
            if trial_norm <= (1.0 - Config.ARMIJO_C * t) * norm:
                break
            t *= 0.5
        else:
            raise NoConvergenceError("Shooting line search failed to reduce the residual", history)
        z = z + t * direction
        residual = accept(z)

    trajectory = _shoot(P, pi, recovery, z)
    grid = Grid.trivial(P.T)
    x = PiecewiseC1Fn(grid, [lambda t: _vec(trajectory(t))[:n]],
                      [lambda t: _shooting_field(P, pi, recovery, t, _vec(trajectory(t)))[:n]])
    p = PiecewiseC1Fn(grid, [lambda t: _vec(trajectory(t))[n:]],
                      [lambda t: _shooting_field(P, pi, recovery, t, _vec(trajectory(t)))[n:]])
    u = PiecewiseFn(grid, [lambda t: recovery(t, _vec(trajectory(t))[:n], _vec(trajectory(t))[n:])])
    process = Process(x, u, pi)

    g, _ = P.terminal_values(x.eval(P.T), pi)
    if np.any(g[1:] < -tol.feasibility):
        raise UnsupportedProblemError("An inequality constraint is violated at the shooting solution")
    multipliers = Multipliers(np.concatenate(([1.0], np.zeros(P.m))), z[n:], normalized=True,
                              regime="shooting", nullity=1)
    return ShootingResult(process, multipliers, AdjointPath(p, 1.0), iterations, history)


def _shooting_field(P: BolzaProblem, pi: np.ndarray, recovery: _ControlRecovery, t: float, y: np.ndarray) -> np.ndarray:
    n = P.n
    x, p = y[:n], y[n:]
    u = recovery(t, x, p)
    return np.concatenate((P.dynamics(t, x, u, pi), -recovery.H.grad_x(t, x, u, p, pi)))
