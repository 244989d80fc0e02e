"""
Problem loader - turns problem, spike and control documents into domain objects
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .builtins import get_builtin
from .config import Tolerances
from .errors import ConfigurationError, DomainError
from .exprdiff import Dims, bind_problem
from .piecewise import PiecewiseFn, from_json
from .problem import BolzaProblem, ControlBox, DerivMode
from .yaml_reader import read_document

PROBLEM_KEYS = {
    'name', 'builtin', 'state_dim', 'control_dim', 'param_dim', 'horizon', 'xi0',
    'f0', 'f', 'g', 'h', 'control_box', 'deriv_mode', 'pi', 'dpi', 'spikes',
    'tolerances', 'omega_guard', 'control',
}
SPIKE_KEYS = {'spikes', 'amplitudes', 'levels', 'ratio'}


@dataclass
class SpikeConfig:
    """Spike list with the amplitude ladder of a needle study"""
    spikes: List[Tuple[float, List[float]]]
    amplitudes: List[float]
    levels: int = 6
    ratio: float = 2.0


@dataclass
class LoadedProblem:
    """Problem document resolved into domain objects"""
    problem: BolzaProblem
    pi: np.ndarray
    dpi: Optional[np.ndarray]
    tolerances: Tolerances
    spikes: Optional[SpikeConfig] = None
    control: Optional[PiecewiseFn] = None
    source: str = ""


def _floats(value: Any, key: str) -> List[float]:
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigurationError(f"'{key}' must be a number or a list of numbers, got {value!r}") from None


def _int(data: Mapping[str, Any], key: str, default: Optional[int] = None) -> int:
    raw = data.get(key, default)
    if raw is None:
        raise ConfigurationError(f"Missing required key '{key}'")
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigurationError(f"'{key}' must be an integer, got {raw!r}")
    return raw


def _resolve(base_dir: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def spikes_from_mapping(data: Mapping[str, Any]) -> SpikeConfig:
    """Build a SpikeConfig from {spikes, amplitudes, levels, ratio}"""
    unknown = set(data) - SPIKE_KEYS
    if unknown:
        raise ConfigurationError(f"Unknown spike keys: {', '.join(sorted(unknown))}")
    raw = data.get('spikes')
    if not raw:
        raise ConfigurationError("Spike file needs a non-empty 'spikes' list")
    spikes = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigurationError(f"Spike entries are [t, [v...]], got {entry!r}")
        spikes.append((float(entry[0]), _floats(entry[1], 'spikes')))
    amplitudes = _floats(data.get('amplitudes', [0.1 / len(spikes)] * len(spikes)), 'amplitudes')
    levels = _int(data, 'levels', 6)
    ratio = float(data.get('ratio', 2.0))
    if levels < 1 or ratio <= 1.0:
        raise ConfigurationError("Needle study needs levels >= 1 and ratio > 1")
    return SpikeConfig(spikes, amplitudes, levels, ratio)


def load_spike_file(file_path: str) -> SpikeConfig:
    return spikes_from_mapping(read_document(file_path))


def load_control_file(file_path: str) -> PiecewiseFn:
    """Control in the piecewise JSON form {T, breakpoints, samples}"""
    try:
        return from_json(read_document(file_path))
    except DomainError as exc:
        raise ConfigurationError(f"{file_path}: {exc}") from exc


def _expression_problem(data: Mapping[str, Any], name: str) -> BolzaProblem:
    dims = Dims(_int(data, 'state_dim'), _int(data, 'control_dim', 0), _int(data, 'param_dim', 0))
    if 'horizon' not in data or 'xi0' not in data:
        raise ConfigurationError("Expression problems need 'horizon' and 'xi0'")
    try:
        mode = DerivMode(data.get('deriv_mode', DerivMode.DUAL_AD.value))
    except ValueError:
        raise ConfigurationError(f"Unknown deriv_mode {data.get('deriv_mode')!r}") from None
    if mode == DerivMode.ANALYTIC:
        raise ConfigurationError("deriv_mode analytic is only available for builtins")
    box = ControlBox.from_config(data.get('control_box'), dims.mu)
    guard = data.get('omega_guard')
    if guard is not None:
        guard = (_floats(guard.get('lower'), 'omega_guard.lower'), _floats(guard.get('upper'), 'omega_guard.upper'))
    exprs = {key: data[key] for key in ('f0', 'f', 'g', 'h') if key in data}
    return bind_problem(exprs, dims, float(data['horizon']), _floats(data['xi0'], 'xi0'),
                        control_box=box, pi0=_floats(data['pi'], 'pi') if 'pi' in data else None,
                        name=name, omega_guard=guard, deriv_mode=mode)


def _builtin_problem(data: Mapping[str, Any]) -> BolzaProblem:
    clashing = sorted({'state_dim', 'control_dim', 'param_dim', 'f0', 'f', 'g', 'h'} & set(data))
    if clashing:
        raise ConfigurationError(f"Builtin problems do not take: {', '.join(clashing)}")
    kwargs = {}
    if 'xi0' in data:
        xi0 = _floats(data['xi0'], 'xi0')
        if len(xi0) != 1:
            raise ConfigurationError("Builtin problems take a scalar xi0")
        kwargs['xi0'] = xi0[0]
    if 'horizon' in data:
        kwargs['T'] = float(data['horizon'])
    return get_builtin(str(data['builtin']), **kwargs)


def problem_from_mapping(data: Mapping[str, Any], base_dir: Optional[Path] = None,
                         source: str = "") -> LoadedProblem:
    """
    Resolve a problem document

    Args:
        data: Parsed document
        base_dir: Directory that relative spike/control paths are resolved against
        source: Label used in messages

    Returns:
        LoadedProblem with defaults filled in
    """
    unknown = set(data) - PROBLEM_KEYS
    if unknown:
        raise ConfigurationError(f"Unknown problem keys: {', '.join(sorted(unknown))}")
    base_dir = base_dir or Path.cwd()
    name = str(data.get('name') or data.get('builtin') or 'problem')

    if 'builtin' in data:
        problem = _builtin_problem(data)
    else:
        problem = _expression_problem(data, name)

    pi = problem.pi0 if 'pi' not in data else np.array(_floats(data['pi'], 'pi'))
    if pi.size != problem.n_params:
        raise ConfigurationError(f"'pi' has {pi.size} entries, param_dim is {problem.n_params}")
    dpi = None
    if 'dpi' in data:
        dpi = np.array(_floats(data['dpi'], 'dpi'))
        if dpi.size != problem.n_params:
            raise ConfigurationError(f"'dpi' has {dpi.size} entries, param_dim is {problem.n_params}")

    tolerances = Tolerances().override(data.get('tolerances'))

    spikes = None
    raw_spikes = data.get('spikes')
    if isinstance(raw_spikes, str):
        spikes = load_spike_file(str(_resolve(base_dir, raw_spikes)))
    elif raw_spikes is not None:
        spikes = spikes_from_mapping(raw_spikes)

    control = None
    raw_control = data.get('control')
    if isinstance(raw_control, str):
        control = load_control_file(str(_resolve(base_dir, raw_control)))
    elif raw_control is not None:
        try:
            control = from_json(raw_control)
        except DomainError as exc:
            raise ConfigurationError(f"Invalid embedded control: {exc}") from exc

    return LoadedProblem(problem, pi, dpi, tolerances, spikes, control, source or name)


def load_problem(file_path: str) -> LoadedProblem:
    """Read a problem file (YAML, JSON or TOML)"""
    data = read_document(file_path)
    return problem_from_mapping(data, Path(file_path).parent, file_path)
