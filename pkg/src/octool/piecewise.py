"""
Piecewise-continuous and piecewise-C1 functions on [0, T]

A function lives on a Grid of breakpoints 0 = tau_0 < ... < tau_{k+1} = T.
Segment i is a callable defined on the closed interval [tau_i, tau_{i+1}];
its values at the two ends are the one-sided limits of the function at the
breakpoints, so limits are exact and never recovered from samples.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad_vec

from .config import Config
from .errors import DomainError, NumericError

Segment = Callable[[float], Any]


class Side(str, Enum):
    """Which value to return at a breakpoint"""
    AUTO = "auto"
    LEFT = "left"
    RIGHT = "right"


class Normalization(str, Enum):
    """Point-value convention at breakpoints"""
    NORMALIZED_RIGHT = "normalized-right"
    RAW = "raw"


def _as_vector(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


@dataclass(frozen=True)
class Grid:
    """Breakpoint partition of [0, T]"""
    T: float
    breakpoints: Tuple[float, ...]

    def __post_init__(self):
        T = float(self.T)
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"Horizon must be a positive real, got {self.T!r}")
        points = tuple(float(b) for b in self.breakpoints)
        if len(points) < 2:
            raise DomainError("A grid needs at least the breakpoints 0 and T")
        if points[0] != 0.0 or points[-1] != T:
            raise DomainError(f"Breakpoints must start at 0 and end at T={T}, got {points[0]}..{points[-1]}")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise DomainError("Breakpoints must be strictly increasing")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "breakpoints", points)

    @classmethod
    def trivial(cls, T: float) -> "Grid":
        return cls(T, (0.0, float(T)))

    @classmethod
    def from_points(cls, T: float, points: Sequence[float]) -> "Grid":
        """Grid through the given points; endpoints added, near-duplicates merged"""
        T = float(T)
        tol = Config.BREAKPOINT_DEDUP_RTOL * T
        inner = sorted(float(p) for p in points if tol < float(p) < T - tol)
        kept = [0.0]
        for p in inner:
            if p - kept[-1] > tol:
                kept.append(p)
        kept.append(T)
        return cls(T, tuple(kept))

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def interior(self) -> Tuple[float, ...]:
        return self.breakpoints[1:-1]

    @property
    def tolerance(self) -> float:
        return Config.BREAKPOINT_DEDUP_RTOL * self.T

    def segments(self) -> Iterator[Tuple[float, float]]:
        return iter(zip(self.breakpoints[:-1], self.breakpoints[1:]))

    def locate(self, t: float) -> Optional[int]:
        """Index of the breakpoint t sits on, or None"""
        j = bisect_right(self.breakpoints, t + self.tolerance) - 1
        if j >= 0 and abs(t - self.breakpoints[j]) <= self.tolerance:
            return j
        return None

    def segment_index(self, t: float, side: Union[Side, str] = Side.RIGHT) -> int:
        """Segment holding t; at a breakpoint, side picks the segment to its left or right"""
        j = bisect_right(self.breakpoints, t + self.tolerance) - 1
        j = max(j, 0)
        on_breakpoint = abs(t - self.breakpoints[j]) <= self.tolerance
        if Side(side) == Side.LEFT and on_breakpoint and j > 0:
            return j - 1
        return min(j, self.n_segments - 1)

    def check_time(self, t: float) -> float:
        t = float(t)
        if not (-self.tolerance <= t <= self.T + self.tolerance):
            raise DomainError(f"t={t} outside [0, {self.T}]")
        return min(max(t, 0.0), self.T)

    def sample_times(self, per_segment: int) -> List[Tuple[float, int]]:
        """(t, segment) pairs, both ends of every segment included"""
        out = []
        for i, (a, b) in enumerate(self.segments()):
            for t in np.linspace(a, b, max(per_segment, 2)):
                out.append((float(t), i))
        return out


def merge_grids(g1: Grid, g2: Grid) -> Grid:
    """Union of two grids on the same horizon"""
    if abs(g1.T - g2.T) > Config.BREAKPOINT_DEDUP_RTOL * max(g1.T, g2.T):
        raise DomainError(f"Cannot merge grids with horizons {g1.T} and {g2.T}")
    if g1 == g2:
        return g1
    return Grid.from_points(g1.T, g1.breakpoints + g2.breakpoints)


def _merge_all(grids: Sequence[Grid]) -> Grid:
    return reduce(merge_grids, grids)


class PiecewiseFn:
    """
    Piecewise-continuous function on [0, T] with values in R^d

    Immutable after construction. One-sided limits at every breakpoint are
    computed once from the segment callables and cached.
    """

    def __init__(self, grid: Grid, segments: Sequence[Segment],
                 normalization: Union[Normalization, str] = Normalization.NORMALIZED_RIGHT,
                 point_values: Optional[Sequence[Optional[Any]]] = None):
        if len(segments) != grid.n_segments:
            raise DomainError(f"Grid has {grid.n_segments} segments but {len(segments)} evaluators were given")
        self.grid = grid
        self.segments = tuple(segments)
        self.normalization = Normalization(normalization)
        self._right = tuple(_as_vector(seg(a)) for seg, (a, _) in zip(self.segments, grid.segments()))
        self._left = tuple(_as_vector(seg(b)) for seg, (_, b) in zip(self.segments, grid.segments()))
        self.dim = self._right[0].size
        if any(v.size != self.dim for v in self._right + self._left):
            raise DomainError("Segments disagree on the value dimension")
        self._points: Optional[Tuple[Optional[np.ndarray], ...]] = None
        if point_values is not None:
            if len(point_values) != len(grid.breakpoints):
                raise DomainError("point_values needs one entry per breakpoint")
            self.normalization = Normalization.RAW
            self._points = tuple(None if v is None else _as_vector(v) for v in point_values)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def constant(cls, grid: Union[Grid, float], value: Any) -> "PiecewiseFn":
        if not isinstance(grid, Grid):
            grid = Grid.trivial(grid)
        vec = _as_vector(value)
        return cls(grid, [lambda t, v=vec: v.copy()] * grid.n_segments)

    @classmethod
    def from_callable(cls, T: float, fn: Segment, breakpoints: Sequence[float] = ()) -> "PiecewiseFn":
        grid = Grid.from_points(T, breakpoints)
        return cls(grid, [fn] * grid.n_segments)

    @classmethod
    def piecewise_constant(cls, grid: Grid, values: Sequence[Any]) -> "PiecewiseFn":
        vecs = [_as_vector(v) for v in values]
        return cls(grid, [lambda t, v=v: v.copy() for v in vecs])

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    @property
    def right_limits(self) -> Tuple[np.ndarray, ...]:
        return self._right

    @property
    def left_limits(self) -> Tuple[np.ndarray, ...]:
        return self._left

    def eval(self, t: float, side: Union[Side, str] = Side.AUTO) -> np.ndarray:
        """Value at t; at a breakpoint `auto` follows the normalization flag"""
        t = self.grid.check_time(t)
        side = Side(side)
        j = self.grid.locate(t)
        if j is None:
            return _as_vector(self.segments[self.grid.segment_index(t)](t))
        last = len(self.grid.breakpoints) - 1
        if side == Side.AUTO:
            if self._points is not None and self._points[j] is not None:
                return self._points[j].copy()
            side = Side.LEFT if j == last else Side.RIGHT
        if side == Side.LEFT and j > 0:
            return self._left[j - 1].copy()
        if side == Side.RIGHT and j < last:
            return self._right[j].copy()
        # left limit at 0 / right limit at T do not exist; use the only side there is
        return (self._right[0] if j == 0 else self._left[-1]).copy()

    __call__ = eval

    def segment_covering(self, a: float, b: float) -> Segment:
        """Evaluator of the segment that contains [a, b]"""
        return self.segments[self.grid.segment_index(0.5 * (a + b))]

    def jumps(self) -> np.ndarray:
        return np.array([np.linalg.norm(self._right[i] - self._left[i - 1])
                         for i in range(1, self.grid.n_segments)])

    def refine(self, grid: Grid) -> "PiecewiseFn":
        """Same function on a finer grid"""
        _check_refinement(self.grid, grid)
        return PiecewiseFn(grid, [self.segment_covering(a, b) for a, b in grid.segments()])

    def normalize(self) -> "PiecewiseFn":
        return PiecewiseFn(self.grid, self.segments)

    def samples(self, per_segment: int = Config.NORM_SAMPLES_PER_SEGMENT) -> List[Tuple[float, str, np.ndarray]]:
        """(t, side, value) triples; segment ends are reported as one-sided limits"""
        out = []
        for i, (a, b) in enumerate(self.grid.segments()):
            ts = np.linspace(a, b, max(per_segment, 2))
            seg = self.segments[i]
            for k, t in enumerate(ts):
                side = Side.RIGHT if k == 0 else Side.LEFT if k == len(ts) - 1 else Side.AUTO
                value = self._right[i] if k == 0 else self._left[i] if k == len(ts) - 1 else _as_vector(seg(t))
                out.append((float(t), side.value, value))
        return out

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: "PiecewiseFn") -> "PiecewiseFn":
        return linear_combination((1.0, 1.0), (self, other))

    def __sub__(self, other: "PiecewiseFn") -> "PiecewiseFn":
        return linear_combination((1.0, -1.0), (self, other))

    def __mul__(self, scalar: float) -> "PiecewiseFn":
        return linear_combination((float(scalar),), (self,))

    __rmul__ = __mul__

    def __neg__(self) -> "PiecewiseFn":
        return linear_combination((-1.0,), (self,))

    def __repr__(self) -> str:
        return (f"{type(self).__name__}(T={self.grid.T}, segments={self.grid.n_segments}, "
                f"dim={self.dim}, {self.normalization.value})")


class PiecewiseC1Fn(PiecewiseFn):
    """Continuous function on [0, T] that is C1 on every segment"""

    def __init__(self, grid: Grid, segments: Sequence[Segment], derivatives: Sequence[Segment],
                 continuity_tol: float = Config.CONTINUITY_TOL):
        super().__init__(grid, segments)
        if len(derivatives) != grid.n_segments:
            raise DomainError("One derivative evaluator per segment is required")
        self.derivatives = tuple(derivatives)
        for i in range(1, grid.n_segments):
            gap = np.linalg.norm(self._right[i] - self._left[i - 1])
            scale = 1.0 + np.linalg.norm(self._left[i - 1])
            if gap > continuity_tol * scale:
                raise DomainError(f"Value jump {gap:.3e} at breakpoint t={grid.breakpoints[i]}")
        self._derivative: Optional[PiecewiseFn] = None

    def extended_derivative(self) -> PiecewiseFn:
        """Right derivative at 0 and interior breakpoints, left derivative at T"""
        if self._derivative is None:
            self._derivative = PiecewiseFn(self.grid, self.derivatives, Normalization.NORMALIZED_RIGHT)
        return self._derivative

    def derivative_covering(self, a: float, b: float) -> Segment:
        return self.derivatives[self.grid.segment_index(0.5 * (a + b))]

    def refine(self, grid: Grid) -> "PiecewiseC1Fn":
        _check_refinement(self.grid, grid)
        return PiecewiseC1Fn(grid,
                             [self.segment_covering(a, b) for a, b in grid.segments()],
                             [self.derivative_covering(a, b) for a, b in grid.segments()])


def _check_refinement(coarse: Grid, fine: Grid) -> None:
    if abs(coarse.T - fine.T) > coarse.tolerance:
        raise DomainError("Refinement must keep the horizon")
    for b in coarse.interior:
        if fine.locate(b) is None:
            raise DomainError(f"Refinement drops breakpoint {b}")


# ----------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------


def evaluate(f: PiecewiseFn, t: float, side: Union[Side, str] = Side.AUTO) -> np.ndarray:
    return f.eval(t, side)


def extended_derivative(x: PiecewiseC1Fn) -> PiecewiseFn:
    return x.extended_derivative()


def _combined(coeffs: Tuple[float, ...], parts: Sequence[Segment]) -> Segment:
    def segment(t):
        total = coeffs[0] * _as_vector(parts[0](t))
        for c, part in zip(coeffs[1:], parts[1:]):
            total = total + c * _as_vector(part(t))
        return total
    return segment


def linear_combination(coeffs: Sequence[float], fns: Sequence[PiecewiseFn]) -> PiecewiseFn:
    """
    sum_k coeffs[k] * fns[k] on the merged grid

    PiecewiseC1Fn inputs give a PiecewiseC1Fn whose derivative segments are the
    same combination of the input derivative segments.
    """
    if len(coeffs) != len(fns) or not fns:
        raise DomainError("linear_combination needs one coefficient per function")
    coeffs = tuple(float(c) for c in coeffs)
    grid = _merge_all([f.grid for f in fns])
    segments = [_combined(coeffs, [f.segment_covering(a, b) for f in fns]) for a, b in grid.segments()]
    if all(isinstance(f, PiecewiseC1Fn) for f in fns):
        derivatives = [_combined(coeffs, [f.derivative_covering(a, b) for f in fns]) for a, b in grid.segments()]
        return PiecewiseC1Fn(grid, segments, derivatives)
    return PiecewiseFn(grid, segments)


def _composed(fn: Callable[..., Any], parts: Sequence[Segment]) -> Segment:
    def segment(t):
        return _as_vector(fn(t, *(part(t) for part in parts)))
    return segment


def compose(fn: Callable[..., Any], *pieces: PiecewiseFn, grid: Optional[Grid] = None) -> PiecewiseFn:
    """t -> fn(t, pieces[0](t), pieces[1](t), ...) on the merged grid"""
    grids = [p.grid for p in pieces] + ([grid] if grid is not None else [])
    if not grids:
        raise DomainError("compose needs at least one piece or an explicit grid")
    base = _merge_all(grids)
    return PiecewiseFn(base, [_composed(fn, [p.segment_covering(a, b) for p in pieces])
                              for a, b in base.segments()])


def _stacked(parts: Sequence[Segment]) -> Segment:
    def segment(t):
        return np.concatenate([_as_vector(part(t)) for part in parts])
    return segment


def stack(fns: Sequence[PiecewiseFn]) -> PiecewiseFn:
    """Concatenate the values of several functions on their merged grid"""
    grid = _merge_all([f.grid for f in fns])
    segments = [_stacked([f.segment_covering(a, b) for f in fns]) for a, b in grid.segments()]
    if all(isinstance(f, PiecewiseC1Fn) for f in fns):
        derivatives = [_stacked([f.derivative_covering(a, b) for f in fns]) for a, b in grid.segments()]
        return PiecewiseC1Fn(grid, segments, derivatives)
    return PiecewiseFn(grid, segments)


def _quad(segment: Segment, a: float, b: float) -> np.ndarray:
    if b <= a:
        return _as_vector(segment(a)) * 0.0
    result, err, info = quad_vec(lambda s: _as_vector(segment(s)), a, b,
                                 epsabs=Config.QUAD_ABS_TOL, epsrel=Config.QUAD_REL_TOL,
                                 limit=200, full_output=True)
    if not info.success and err > 100 * Config.QUAD_ABS_TOL:
        raise NumericError(f"Quadrature error estimate {err:.3e} above tolerance", segment=(a, b))
    return _as_vector(result)


def integrate(f: PiecewiseFn, s: float, t: float) -> np.ndarray:
    """Riemann integral of f over [s, t], one quadrature per segment"""
    s = f.grid.check_time(s)
    t = f.grid.check_time(t)
    if s > t:
        raise DomainError(f"Integration bounds out of order: s={s} > t={t}")
    total = np.zeros(f.dim)
    for seg, (a, b) in zip(f.segments, f.grid.segments()):
        lo, hi = max(a, s), min(b, t)
        if hi > lo:
            total = total + _quad(seg, lo, hi)
    return total


def _cumulative(segment: Segment, a: float, start: np.ndarray) -> Segment:
    def value(t):
        if t <= a:
            return start.copy()
        return start + _quad(segment, a, t)
    return value


def antiderivative(f: PiecewiseFn, initial: Optional[Any] = None) -> PiecewiseC1Fn:
    """t -> initial + integral of f over [0, t]"""
    value = np.zeros(f.dim) if initial is None else _as_vector(initial)
    starts = []
    for seg, (a, b) in zip(f.segments, f.grid.segments()):
        starts.append(value)
        value = value + _quad(seg, a, b)
    segments = [_cumulative(seg, a, start) for seg, (a, _), start in zip(f.segments, f.grid.segments(), starts)]
    return PiecewiseC1Fn(f.grid, segments, f.segments)


def bielecki_norm(f: PiecewiseFn, L: float, per_segment: int = Config.NORM_SAMPLES_PER_SEGMENT) -> float:
    """
    sup_t exp(-L t) |f(t)| over sampled t

    Samples both one-sided limits at every breakpoint plus per_segment points
    per segment, so the result is a lower bound on the true supremum.
    """
    if L < 0:
        raise DomainError(f"Bielecki weight must be nonnegative, got {L}")
    best = 0.0
    for t, _, value in f.samples(per_segment):
        best = max(best, math.exp(-L * t) * float(np.linalg.norm(value)))
    if f._points is not None:
        for t, value in zip(f.grid.breakpoints, f._points):
            if value is not None:
                best = max(best, math.exp(-L * t) * float(np.linalg.norm(value)))
    return best


def sup_norm(f: PiecewiseFn, per_segment: int = Config.NORM_SAMPLES_PER_SEGMENT) -> float:
    return bielecki_norm(f, 0.0, per_segment)


def jumps(f: PiecewiseFn) -> np.ndarray:
    return f.jumps()


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------


def to_json(f: PiecewiseFn, per_segment: int = Config.JSON_SAMPLES_PER_SEGMENT) -> Dict[str, Any]:
    """{"T", "breakpoints", "samples": [[t, side, v1, ...], ...]}"""
    return {
        "T": f.grid.T,
        "breakpoints": list(f.grid.breakpoints),
        "samples": [[t, side] + [float(v) for v in value] for t, side, value in f.samples(per_segment)],
    }


def _interpolant(ts: np.ndarray, vs: np.ndarray) -> Segment:
    def segment(t):
        return np.array([np.interp(t, ts, vs[:, j]) for j in range(vs.shape[1])])
    return segment


def from_json(data: Dict[str, Any]) -> PiecewiseFn:
    """
    Rebuild a function from its sampled JSON form

    Segments become piecewise-linear interpolants of their samples; one-sided
    limits are the samples tagged left/right at each breakpoint.
    """
    try:
        grid = Grid(float(data["T"]), tuple(data["breakpoints"]))
        samples = data["samples"]
    except (KeyError, TypeError) as exc:
        raise DomainError(f"Malformed piecewise JSON: {exc}") from exc
    per_segment: List[List[Tuple[float, List[float]]]] = [[] for _ in range(grid.n_segments)]
    for row in samples:
        t, side, values = float(row[0]), Side(row[1]), [float(v) for v in row[2:]]
        j = grid.locate(t)
        if j is not None:
            if side == Side.LEFT or j == len(grid.breakpoints) - 1:
                per_segment[max(j - 1, 0)].append((t, values))
            else:
                per_segment[min(j, grid.n_segments - 1)].append((t, values))
        else:
            per_segment[grid.segment_index(t)].append((t, values))
    segments = []
    for i, rows in enumerate(per_segment):
        if not rows:
            raise DomainError(f"No samples for segment {i}")
        rows.sort(key=lambda r: r[0])
        ts = np.array([r[0] for r in rows])
        vs = np.array([r[1] for r in rows])
        segments.append(_interpolant(ts, vs))
    return PiecewiseFn(grid, segments)
