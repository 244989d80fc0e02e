"""
Configuration constants and tolerance sets for octool
"""

from dataclasses import dataclass, asdict, fields
from typing import Any, Dict, Mapping, Optional

from .errors import ConfigurationError


class Config:
    """Configuration constants"""

    ENV_THREADS = "OCTOOL_THREADS"
    DEFAULT_OUT_DIR = "octool-out"
    DEFAULT_SEED = 0x5EED

    # piecewise
    BREAKPOINT_DEDUP_RTOL = 1e-12
    QUAD_ABS_TOL = 1e-10
    QUAD_REL_TOL = 1e-12
    NORM_SAMPLES_PER_SEGMENT = 64
    JSON_SAMPLES_PER_SEGMENT = 16
    CONTINUITY_TOL = 1e-7

    # integration
    ODE_METHOD = "RK45"
    ODE_RTOL = 1e-12
    ODE_ATOL = 1e-12
    BLOWUP_BOUND = 1e8
    NEEDLE_MIN_WIDTH_RTOL = 1e-12
    RESOLVENT_CACHE_POINTS = 256
    RESOLVENT_COND_WARN = 1e12
    GUARD_MAX_HALVINGS = 30

    # derivative synthesis
    FD_REL_STEP = 1e-6

    # verification
    MP_GRID_PER_DIM = 64
    MP_MAX_GRID_POINTS = 4096
    MP_MULTISTARTS = 8
    MP_TIME_SAMPLES = 9
    MP_SEARCH_RADIUS = 10.0
    COLLOCATION_POINTS = 8
    COLLOCATION_STEP = 1e-5
    SCAN_TIME_POINTS = 257

    # shooting
    SHOOTING_MAX_ITER = 50
    SHOOTING_FD_STEP = 1e-7
    ARMIJO_C = 1e-4
    ARMIJO_MIN_STEP = 1.0 / 1024
    CONCAVITY_STEP = 1e-3
    CONCAVITY_EPS = 1e-12
    CONCAVITY_SAMPLES = 5

    # envelope
    SHELL_RADII = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    SHELL_DIRECTIONS = 8
    ENVELOPE_FD_STEP = 1e-4
    FD_H_LIST = (1e-2, 1e-3, 1e-4, 1e-5)
    LINEARITY_TOL = 1e-10


@dataclass
class Tolerances:
    """Tolerance set every verdict is derived from"""
    feasibility: float = 1e-8
    certificate: float = 1e-6
    active_set: float = 1e-7
    rank_rtol: float = 1e-8
    stationarity: float = 1e-6
    sign: float = 1e-8
    shooting: float = 1e-10

    def override(self, overrides: Optional[Mapping[str, Any]]) -> "Tolerances":
        """
        Return a copy with the given entries replaced

        Args:
            overrides: Mapping of tolerance name to value

        Returns:
            New Tolerances instance
        """
        if not overrides:
            return Tolerances(**asdict(self))
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigurationError(f"Unknown tolerance keys: {', '.join(unknown)}")
        values = asdict(self)
        for key, value in overrides.items():
            try:
                values[key] = float(value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"Tolerance '{key}' must be a number, got {value!r}") from exc
            if values[key] <= 0:
                raise ConfigurationError(f"Tolerance '{key}' must be positive")
        return Tolerances(**values)

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)
