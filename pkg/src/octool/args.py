"""
Argument parser for octool CLI
"""

import argparse
import sys
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional

from . import __version__
from .config import Config
from .errors import ConfigurationError

COMMANDS = ("simulate", "verify", "envelope", "needle-study", "shoot")
FORMATS = ("json", "csv")
SOURCES = ("auto", "exact", "shooting")


def parse_vector(text: Optional[str]) -> Optional[List[float]]:
    """Parse '1,2.5' or '1 2.5' into a list of floats"""
    if text is None:
        return None
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigurationError(f"Invalid vector '{text}'. Expected comma separated numbers") from None


@dataclass
class RunConfig:
    """Everything one command invocation needs"""
    command: str
    problem_file: Optional[str] = None
    pi: Optional[List[float]] = None
    dpi: Optional[List[float]] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    out_dir: str = Config.DEFAULT_OUT_DIR
    seed: int = Config.DEFAULT_SEED
    format: str = "json"
    timestamp: bool = True
    scan_multipliers: bool = False
    scan_adjoint: bool = False
    scan_gradient: bool = False
    needle_file: Optional[str] = None
    control_file: Optional[str] = None
    perturb: Optional[float] = None
    source: str = "auto"
    mayer: bool = False
    debug: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command '{self.command}'. Expected one of: {', '.join(COMMANDS)}")
        if self.format not in FORMATS:
            raise ConfigurationError(f"Unknown format '{self.format}'. Expected json or csv")
        if self.source not in SOURCES:
            raise ConfigurationError(f"Unknown process source '{self.source}'")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        """Build from a plain mapping; unknown keys are rejected"""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown run configuration keys: {', '.join(unknown)}")
        return cls(**dict(data))


class OctoolArgs:
    """Singleton class for parsed command-line arguments"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._initialized = True
        self.config: Optional[RunConfig] = None
        self.debug: bool = False

    def set_args(self, config: RunConfig):
        """Set parsed arguments"""
        self.config = config
        self.debug = config.debug


class OctoolArgumentParser(argparse.ArgumentParser):
    """Usage errors raise ConfigurationError so they share exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(f"{self.prog}: {message}")


def create_argument_parser() -> argparse.ArgumentParser:
    """
    Create and configure argument parser

    Returns:
        Configured ArgumentParser instance
    """
    parser = OctoolArgumentParser(
        prog='octool',
        description='Maximum principle, needle variation and envelope toolkit for parameterized optimal control',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""\nExamples:
  octool simulate --problem samples/steering.yaml               # Integrate the nominal control
  octool verify --problem samples/lq_scalar.yaml                # Certificate for the exact optimum
  octool verify --problem samples/lq_scalar.yaml --source shooting
                                                                # Certificate for the shooting solution
  octool verify --problem samples/lq_scalar.yaml --perturb 0.1  # Expect a maximum-condition failure
  octool envelope --problem samples/steering.yaml --pi 1 --dpi 1 --scan-multipliers
                                                                # Envelope terms plus a continuity scan
  octool needle-study --problem samples/lq_scalar.yaml --needle samples/spikes.yaml
                                                                # Needle expansion residuals
  octool shoot --problem samples/lq_expr.yaml --format csv      # Shooting with CSV tables
        """
    )

    parser.add_argument(
        'command',
        choices=COMMANDS,
        metavar='COMMAND',
        help=f'One of: {", ".join(COMMANDS)}'
    )

    parser.add_argument(
        '-v', '--version',
        action='version',
        version=f'%(prog)s {__version__}'
    )

    parser.add_argument(
        '-p', '--problem',
        dest='problem_file',
        metavar='FILE',
        required=True,
        help='Problem file (YAML, JSON or TOML)'
    )

    parser.add_argument(
        '--pi',
        dest='pi',
        metavar='VEC',
        help='Parameter value, comma separated (default: pi from the problem file)'
    )

    parser.add_argument(
        '--dpi',
        dest='dpi',
        metavar='VEC',
        help='Parameter direction for the envelope command'
    )

    parser.add_argument(
        '--tol',
        type=float,
        dest='tol',
        metavar='FLOAT',
        help='Certificate tolerance (overrides tolerances.certificate)'
    )

    parser.add_argument(
        '--seed',
        type=int,
        dest='seed',
        default=Config.DEFAULT_SEED,
        metavar='INT',
        help='Seed of every randomized scan'
    )

    parser.add_argument(
        '-o', '--out',
        dest='out_dir',
        default=Config.DEFAULT_OUT_DIR,
        metavar='DIR',
        help=f'Report directory (default: ./{Config.DEFAULT_OUT_DIR})'
    )

    parser.add_argument(
        '--format',
        choices=FORMATS,
        default='json',
        dest='format',
        help='json writes the report only; csv also writes the tables'
    )

    parser.add_argument(
        '--no-timestamp',
        action='store_false',
        dest='timestamp',
        help='Leave the generation time out of reports'
    )

    parser.add_argument('--scan-multipliers', action='store_true', dest='scan_multipliers',
                        help='Multiplier continuity scan (envelope)')
    parser.add_argument('--scan-adjoint', action='store_true', dest='scan_adjoint',
                        help='Adjoint continuity scan (envelope)')
    parser.add_argument('--scan-gradient', action='store_true', dest='scan_gradient',
                        help='Gradient continuity and linearization scan (envelope)')

    parser.add_argument(
        '--needle',
        dest='needle_file',
        metavar='FILE',
        help='Spike file for needle-study, or an extra study during envelope'
    )

    parser.add_argument(
        '--control',
        dest='control_file',
        metavar='FILE',
        help='Candidate control in piecewise JSON form'
    )

    parser.add_argument(
        '--perturb',
        type=float,
        dest='perturb',
        metavar='FLOAT',
        help='Add a constant to every component of the candidate control'
    )

    parser.add_argument(
        '--source',
        choices=SOURCES,
        default='auto',
        dest='source',
        help='Where the candidate comes from: control file or exact solution first (auto), exact, or shooting'
    )

    parser.add_argument(
        '--mayer',
        action='store_true',
        dest='mayer',
        help='Also verify through the Mayer augmentation'
    )

    parser.add_argument(
        '--debug',
        action='store_true',
        dest='debug',
        help='Print tracebacks of failures'
    )

    return parser


def parse_arguments(args: List[str] = None) -> OctoolArgs:
    """
    Parse command-line arguments and store in singleton

    Args:
        args: List of arguments to parse (default: sys.argv)

    Returns:
        OctoolArgs singleton with parsed arguments
    """
    parser = create_argument_parser()
    parsed = parser.parse_args(args)

    tolerances = {}
    if parsed.tol is not None:
        tolerances['certificate'] = parsed.tol

    config = RunConfig(
        command=parsed.command,
        problem_file=parsed.problem_file,
        pi=parse_vector(parsed.pi),
        dpi=parse_vector(parsed.dpi),
        tolerances=tolerances,
        out_dir=parsed.out_dir,
        seed=parsed.seed,
        format=parsed.format,
        timestamp=parsed.timestamp,
        scan_multipliers=parsed.scan_multipliers,
        scan_adjoint=parsed.scan_adjoint,
        scan_gradient=parsed.scan_gradient,
        needle_file=parsed.needle_file,
        control_file=parsed.control_file,
        perturb=parsed.perturb,
        source=parsed.source,
        mayer=parsed.mayer,
        debug=parsed.debug,
    )

    octool_args = OctoolArgs()
    octool_args.set_args(config)
    return octool_args
