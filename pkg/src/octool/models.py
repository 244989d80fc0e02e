"""
Data models for octool reports

Every report carries a to_dict() used by the JSON and CSV reporters.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .piecewise import PiecewiseC1Fn, to_json


class Verdict(str, Enum):
    """Outcome of a single check"""
    PASS = "pass"
    FAIL = "fail"
    NOT_CHECKED = "not-checked"


def _floats(values: Any) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


@dataclass
class ConditionResult:
    """Residual magnitude and verdict of one necessary condition"""
    name: str
    residual: Optional[float]
    tolerance: float
    verdict: Verdict
    detail: str = ""
    location: Optional[float] = None

    @classmethod
    def judge(cls, name: str, residual: float, tolerance: float, detail: str = "",
              location: Optional[float] = None) -> "ConditionResult":
        verdict = Verdict.PASS if residual <= tolerance else Verdict.FAIL
        return cls(name, float(residual), tolerance, verdict, detail, location)

    @classmethod
    def skipped(cls, name: str, tolerance: float, detail: str) -> "ConditionResult":
        return cls(name, None, tolerance, Verdict.NOT_CHECKED, detail)

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS

    def to_dict(self) -> Dict[str, Any]:
        result = {
            'residual': self.residual,
            'tolerance': self.tolerance,
            'verdict': self.verdict.value,
        }
        if self.detail:
            result['detail'] = self.detail
        if self.location is not None:
            result['location'] = self.location
        return result


@dataclass
class FeasibilityReport:
    """Admissibility diagnostics of a process"""
    dynamics_residual: float
    initial_error: float
    inequality_slacks: List[float]
    equality_violations: List[float]
    tolerance: float

    @property
    def feasible(self) -> bool:
        tol = self.tolerance
        return (self.dynamics_residual <= tol
                and self.initial_error <= tol
                and all(s >= -tol for s in self.inequality_slacks)
                and all(v <= tol for v in self.equality_violations))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feasible': self.feasible,
            'dynamics_residual': self.dynamics_residual,
            'initial_error': self.initial_error,
            'inequality_slacks': list(self.inequality_slacks),
            'equality_violations': list(self.equality_violations),
            'tolerance': self.tolerance,
        }


@dataclass
class Multipliers:
    """Terminal multipliers (lambda_0..lambda_m) and (mu_1..mu_q)"""
    lambdas: np.ndarray
    mus: np.ndarray
    normalized: bool
    regime: str = "LI"
    nullity: int = 1

    @property
    def lambda0(self) -> float:
        return float(self.lambdas[0])

    @property
    def degenerate(self) -> bool:
        return self.nullity > 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': _floats(self.lambdas),
            'mu': _floats(self.mus),
            'normalized': self.normalized,
            'regime': self.regime,
            'nullity': self.nullity,
        }


@dataclass
class AdjointPath:
    """Adjoint covector path p with the lambda_0 it was computed for"""
    p: PiecewiseC1Fn
    lambda0: float

    @property
    def terminal(self) -> np.ndarray:
        return self.p.eval(self.p.grid.T)

    def to_dict(self) -> Dict[str, Any]:
        return {'lambda0': self.lambda0, 'terminal': _floats(self.terminal), 'samples': to_json(self.p)}


@dataclass
class QualificationReport:
    """Rank / positivity diagnostics of one qualification condition"""
    mode: str
    passed: bool
    singular_values: List[float] = field(default_factory=list)
    rank: int = 0
    required_rank: int = 0
    active: List[int] = field(default_factory=list)
    residual: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'passed': self.passed,
            'singular_values': list(self.singular_values),
            'rank': self.rank,
            'required_rank': self.required_rank,
            'active': list(self.active),
            'residual': self.residual,
            'detail': self.detail,
        }


@dataclass
class NonvanishingReport:
    """Minimum over t of max(lambda_0, |p(t)|) or |p(t)|"""
    mode: str
    minimum: float
    location: float
    degenerate: bool

    def to_dict(self) -> Dict[str, Any]:
        return {'mode': self.mode, 'minimum': self.minimum, 'location': self.location,
                'degenerate': self.degenerate}


@dataclass
class SurjectivityReport:
    """Times where the control Jacobian of the dynamics has full row rank"""
    times: List[float]
    ranks: List[int]
    candidates: List[float]
    state_dim: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'state_dim': self.state_dim,
            'candidates': list(self.candidates),
            'samples': [{'t': t, 'rank': r} for t, r in zip(self.times, self.ranks)],
            'exhaustive': False,
        }


@dataclass
class PMPCertificate:
    """Verdicts of every maximum-principle condition along one process"""
    multipliers: Multipliers
    adjoint: AdjointPath
    conditions: Dict[str, ConditionResult]
    qualification: Dict[str, QualificationReport]
    tolerances: Dict[str, float]
    degenerate: bool = False

    @property
    def all_passed(self) -> bool:
        return all(c.verdict != Verdict.FAIL for c in self.conditions.values())

    @property
    def exit_code(self) -> int:
        if self.degenerate:
            return 3
        if any(c.verdict == Verdict.FAIL for c in self.conditions.values()):
            return 2
        if any(c.verdict == Verdict.NOT_CHECKED for name, c in self.conditions.items() if name != 'dH'):
            return 3
        return 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'exit_code': self.exit_code,
            'degenerate': self.degenerate,
            'conditions': {name: c.to_dict() for name, c in self.conditions.items()},
            'multipliers': self.multipliers.to_dict(),
            'adjoint': self.adjoint.to_dict(),
            'qualification': {name: q.to_dict() for name, q in self.qualification.items()},
            'tolerances': dict(self.tolerances),
        }


@dataclass
class ShootingResult:
    """Converged shooting solution"""
    process: Any
    multipliers: Multipliers
    adjoint: AdjointPath
    iterations: int
    history: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iterations': self.iterations,
            'history': list(self.history),
            'multipliers': self.multipliers.to_dict(),
            'adjoint': self.adjoint.to_dict(),
            'state': to_json(self.process.x),
            'control': to_json(self.process.u),
        }


@dataclass
class ResidualRow:
    """One amplitude of a needle expansion study"""
    norm_a1: float
    residual_norm: Optional[float]
    gronwall_ratio: Optional[float]
    status: str
    requested_a1: Optional[float] = None
    halvings: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {'norm_a1': self.norm_a1, 'residual_norm': self.residual_norm,
                'gronwall_ratio': self.gronwall_ratio, 'status': self.status,
                'requested_a1': self.requested_a1, 'halvings': self.halvings}


@dataclass
class ResidualStudy:
    """Needle expansion residuals with the fitted log-log order"""
    rows: List[ResidualRow]
    order: Optional[float]
    k1: Optional[float]
    first_order_map: np.ndarray

    @property
    def successful(self) -> List[ResidualRow]:
        return [r for r in self.rows if r.status == "ok"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rows': [r.to_dict() for r in self.rows],
            'order': self.order,
            'k1': self.k1,
            'first_order_map': np.asarray(self.first_order_map, dtype=float).tolist(),
        }


@dataclass
class EnvelopeReport:
    """Envelope directional derivative with its five summands and the FD comparison"""
    direction: List[float]
    terms: Dict[str, float]
    total: float
    fd_value: Optional[float] = None
    fd_error: Optional[float] = None
    fd_central: Optional[float] = None
    fd_central_error: Optional[float] = None
    fd_status: str = "not requested"

    def to_dict(self) -> Dict[str, Any]:
        return {
            'direction': list(self.direction),
            'terms': dict(self.terms),
            'total': self.total,
            'fd_value': self.fd_value,
            'fd_error': self.fd_error,
            'fd_central': self.fd_central,
            'fd_central_error': self.fd_central_error,
            'fd_status': self.fd_status,
        }


@dataclass
class FDRow:
    """Forward and central value differences for one step h"""
    h: float
    forward: Optional[float]
    central: Optional[float]
    forward_error: Optional[float] = None
    central_error: Optional[float] = None
    status: str = "ok"

    def to_dict(self) -> Dict[str, Any]:
        return {'h': self.h, 'forward': self.forward, 'central': self.central,
                'forward_error': self.forward_error, 'central_error': self.central_error,
                'status': self.status}


@dataclass
class FDTable:
    """Finite-difference oracle for a value directional derivative"""
    rows: List[FDRow]
    richardson: Optional[float]
    order: Optional[float]
    reference: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'rows': [r.to_dict() for r in self.rows], 'richardson': self.richardson,
                'order': self.order, 'reference': self.reference}


@dataclass
class ShellSample:
    """One perturbed parameter of a continuity shell"""
    pi: List[float]
    distance: float
    status: str
    deviation: Optional[float] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        result = {'pi': list(self.pi), 'distance': self.distance, 'status': self.status,
                  'deviation': self.deviation}
        result.update(self.extras)
        return result


@dataclass
class Shell:
    """Samples at one radius and their worst deviation"""
    radius: float
    samples: List[ShellSample]
    max_deviation: Optional[float]
    status: str = "ok"

    def to_dict(self) -> Dict[str, Any]:
        return {'radius': self.radius, 'max_deviation': self.max_deviation, 'status': self.status,
                'samples': [s.to_dict() for s in self.samples]}


@dataclass
class ContinuityScan:
    """Deviations on geometric shells shrinking toward the base parameter"""
    kind: str
    base: List[float]
    shells: List[Shell]
    monotone: bool
    secondary: Optional[Dict[str, List[Optional[float]]]] = None

    def to_dict(self) -> Dict[str, Any]:
        result = {'kind': self.kind, 'base': list(self.base), 'monotone': self.monotone,
                  'shells': [s.to_dict() for s in self.shells]}
        if self.secondary:
            result['secondary'] = {k: list(v) for k, v in self.secondary.items()}
        return result


def shell_rows(scan: ContinuityScan) -> List[Dict[str, Any]]:
    """(radius, deviation, status) rows for CSV export"""
    return [{'radius': s.radius, 'deviation': s.max_deviation, 'status': s.status} for s in scan.shells]


def is_monotone(values: Sequence[Optional[float]], slack: float = 1e-14) -> bool:
    """True when the non-missing values never increase"""
    present = [v for v in values if v is not None]
    return all(b <= a + slack for a, b in zip(present, present[1:]))
