"""Runs one octool command and writes its report."""

import traceback
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .app_manager import AppManager
from .args import OctoolArgs, RunConfig
from .envelope import (AnalyticFamily, ShootingFamily, SolutionFamily, adjoint_continuity_scan,
                       envelope_context, envelope_directional, envelope_gradient, frechet_continuity_check,
                       multiplier_continuity_scan, value_fd_oracle)
from .errors import (ConfigurationError, DomainError, LIViolatedError, NumericError, OctoolError,
                     SignConditionError, UnsupportedProblemError)
from .flow import SpikeList, expansion_residual_study, geometric_amplitudes, integrate_cauchy
from .models import ResidualStudy, shell_rows
from .output import (ColoredOutput, print_certificate, print_envelope_report, print_fd_table,
                     print_feasibility, print_residual_study, print_scan)
from .piecewise import PiecewiseFn, to_json
from .pmp import (hamiltonian_path, nonvanishing_scan, shooting_solve, surjectivity_scan, verify_certificate,
                  verify_mayer)
from .problem import BolzaProblem, Process, criterion, validate_process
from .problem_loader import LoadedProblem, SpikeConfig, load_control_file, load_problem, load_spike_file
from .reporters import CsvReporter, JsonReporter
from .reporters.csv_reporter import fd_rows, residual_rows, trajectory_rows

# Checked in order; subclasses come before their bases
EXIT_CODES = (
    (ConfigurationError, 1),
    (DomainError, 1),
    (LIViolatedError, 3),
    (UnsupportedProblemError, 3),
    (SignConditionError, 2),
    (NumericError, 4),
)


def exit_code_for(exc: BaseException) -> int:
    """Documented exit code of a failure; anything unexpected maps to 1"""
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


class CommandRunner:
    """Executes the command of a RunConfig and collects its report."""

    def __init__(self, config: Optional[RunConfig] = None):
        self.args = OctoolArgs()
        self.config = config or self.args.config
        if self.config is None:
            raise ConfigurationError("No run configuration given")
        self.payload: Dict[str, Any] = {}
        self.tables: Dict[str, List[Dict[str, Any]]] = {}
        self.report_paths: List[str] = []

    @property
    def handlers(self) -> Dict[str, Callable[[LoadedProblem], int]]:
        return {
            'simulate': self.cmd_simulate,
            'verify': self.cmd_verify,
            'envelope': self.cmd_envelope,
            'needle-study': self.cmd_needle_study,
            'shoot': self.cmd_shoot,
        }

    def run(self) -> int:
        """Run the command, write the report once, return the exit code"""
        config = self.config
        ColoredOutput.command_banner(config.command, config.problem_file or "")
        try:
            loaded = self.load()
            exit_code = self.handlers[config.command](loaded)
        except OctoolError as err:
            exit_code = exit_code_for(err)
            self._record_error(err)
        except Exception as err:  # pragma: no cover
            exit_code = 1
            self._record_error(err)
        self._write_reports(exit_code)
        return exit_code

    def _record_error(self, err: BaseException) -> None:
        ColoredOutput.error(f"✗ {type(err).__name__}: {err}")
        if self.config.debug:
            traceback.print_exc()
        self.payload['error'] = {'type': type(err).__name__, 'message': str(err)}
        for attr in ('offset', 'span', 'location', 'escape_time', 'segment', 'history', 'singular_values', 'values'):
            value = getattr(err, attr, None)
            if value is not None:
                self.payload['error'][attr] = list(value) if isinstance(value, (tuple, list)) else value
        # Tables of a failed run are incomplete
        self.tables = {}

    def _write_reports(self, exit_code: int) -> None:
        manager = AppManager()
        manager.set_out_dir(self.config.out_dir)
        manager.initialize()
        reporter = JsonReporter(self.config.command, manager.out_dir, self.config.timestamp)
        self.report_paths = [reporter.generate(self.payload, exit_code)]
        if self.config.format == 'csv' and self.tables:
            self.report_paths += CsvReporter(self.config.command, manager.out_dir).generate(self.tables)
        for path in self.report_paths:
            ColoredOutput.info(f"Report written: {path}")

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------

    def load(self) -> LoadedProblem:
        """Problem file plus command-line overrides"""
        config = self.config
        if not config.problem_file:
            raise ConfigurationError("No problem file specified")
        loaded = load_problem(config.problem_file)
        P = loaded.problem
        if config.pi is not None:
            loaded.pi = self._param_vector(config.pi, P, 'pi')
        if config.dpi is not None:
            loaded.dpi = self._param_vector(config.dpi, P, 'dpi')
        loaded.tolerances = loaded.tolerances.override(config.tolerances)
        if config.needle_file:
            loaded.spikes = load_spike_file(config.needle_file)
        if config.control_file:
            loaded.control = load_control_file(config.control_file)
        self.payload['problem'] = {'name': P.name, 'state_dim': P.n, 'control_dim': P.mu,
                                   'param_dim': P.n_params, 'horizon': P.T,
                                   'deriv_mode': P.deriv_mode.value, 'pi': loaded.pi.tolist()}
        self.payload['seed'] = config.seed
        self.payload['tolerances'] = loaded.tolerances.as_dict()
        return loaded

    @staticmethod
    def _param_vector(values: Sequence[float], P: BolzaProblem, name: str) -> np.ndarray:
        vector = np.asarray(values, dtype=float).reshape(-1)
        if vector.size != P.n_params:
            raise ConfigurationError(f"--{name} has {vector.size} entries, param_dim is {P.n_params}")
        return vector

    # ------------------------------------------------------------------
    # Processes
    # ------------------------------------------------------------------

    @staticmethod
    def _nominal(P: BolzaProblem, pi: np.ndarray) -> PiecewiseFn:
        if P.nominal_control is not None:
            return PiecewiseFn.from_callable(P.T, lambda t: np.asarray(P.nominal_control(t, pi), dtype=float))
        return PiecewiseFn.constant(P.T, P.control_box.center())

    def _perturbed(self, P: BolzaProblem, u: PiecewiseFn) -> PiecewiseFn:
        shift = self.config.perturb
        if not shift:
            return u
        ColoredOutput.warning(f"Control perturbed by {shift:+g}")
        return u + PiecewiseFn.constant(u.grid, np.full(P.mu, shift))

    def candidate(self, loaded: LoadedProblem) -> Process:
        """
        Candidate process for verify and needle-study

        Order for source auto: control file, exact solution, shooting.
        """
        P, pi, source = loaded.problem, loaded.pi, self.config.source
        if source == 'exact' and P.exact_solution is None:
            raise ConfigurationError(f"Problem '{P.name}' has no exact solution")

        if source == 'auto' and loaded.control is not None:
            origin, u = 'control', loaded.control
        elif source in ('auto', 'exact') and P.exact_solution is not None:
            origin, u = 'exact', P.exact_solution(pi).u
            if not self.config.perturb:
                self.payload['candidate'] = 'exact'
                return P.exact_solution(pi)
        else:
            result = shooting_solve(P, pi, tol=loaded.tolerances)
            self.payload['shooting'] = {'iterations': result.iterations, 'history': list(result.history)}
            origin, u = 'shooting', result.process.u
            if not self.config.perturb:
                self.payload['candidate'] = 'shooting'
                return result.process

        self.payload['candidate'] = origin
        u = self._perturbed(P, u)
        return Process(integrate_cauchy(P, u, pi), u, pi)

    def family(self, loaded: LoadedProblem) -> SolutionFamily:
        P = loaded.problem
        if self.config.source == 'shooting' or P.exact_solution is None:
            if self.config.source == 'exact':
                raise ConfigurationError(f"Problem '{P.name}' has no exact solution")
            return ShootingFamily(P, loaded.pi, loaded.tolerances)
        return AnalyticFamily(P)

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def cmd_simulate(self, loaded: LoadedProblem) -> int:
        """Integrate the nominal (or supplied) control and report the criterion"""
        P, pi = loaded.problem, loaded.pi
        u = loaded.control if loaded.control is not None else self._nominal(P, pi)
        u = self._perturbed(P, u)
        x = integrate_cauchy(P, u, pi)
        proc = Process(x, u, pi)
        feasibility = validate_process(P, proc, loaded.tolerances.feasibility)
        value = criterion(P, proc)

        print_feasibility(feasibility)
        ColoredOutput.key_value('criterion', f"{value:.12g}")
        self.payload.update({'criterion': value, 'feasibility': feasibility.to_dict(),
                             'state': to_json(x), 'control': to_json(u)})
        self.tables['trajectory'] = trajectory_rows({'x': x, 'u': u})
        return 0

    def cmd_verify(self, loaded: LoadedProblem) -> int:
        """Certificate of the maximum principle along the candidate process"""
        P, tol, seed = loaded.problem, loaded.tolerances, self.config.seed
        proc = self.candidate(loaded)
        feasibility = validate_process(P, proc, tol.feasibility)
        print_feasibility(feasibility)
        self.payload['feasibility'] = feasibility.to_dict()
        self.payload['criterion'] = criterion(P, proc)
        if not feasibility.feasible:
            ColoredOutput.warning("Candidate is not admissible; conditions are still evaluated")

        cert = verify_certificate(P, proc, tol=tol, seed=seed)
        print_certificate(cert)
        self.payload['certificate'] = cert.to_dict()
        self.payload['nonvanishing'] = nonvanishing_scan(cert).to_dict()
        self.payload['surjectivity'] = surjectivity_scan(P, proc, tol).to_dict()
        exit_code = cert.exit_code

        if self.config.mayer:
            mayer = verify_mayer(P, proc, tol=tol, seed=seed, direct=cert)
            ColoredOutput.key_value('Mayer sigma-adjoint drift', f"{mayer.sigma_drift:.3e}")
            ColoredOutput.key_value('Mayer vs direct', f"{mayer.max_deviation:.3e}")
            self.payload['mayer'] = mayer.to_dict()
            exit_code = max(exit_code, mayer.certificate.exit_code)
            if not mayer.agrees(tol.certificate):
                ColoredOutput.error("Mayer and direct certificates disagree")
                exit_code = max(exit_code, 2)

        self.tables['trajectory'] = trajectory_rows(
            {'x': proc.x, 'u': proc.u, 'p': cert.adjoint.p, 'H': hamiltonian_path(P, proc, cert.adjoint)})
        return exit_code

    def cmd_envelope(self, loaded: LoadedProblem) -> int:
        """Five-term envelope derivative, FD oracle and the requested scans"""
        P, pi, tol, seed = loaded.problem, loaded.pi, loaded.tolerances, self.config.seed
        dpi = loaded.dpi
        if dpi is None:
            if P.n_params:
                raise ConfigurationError("envelope needs a direction: --dpi or 'dpi' in the problem file")
            dpi = np.zeros(0)
        family = self.family(loaded)
        context = envelope_context(P, family, pi, tol)

        report = envelope_directional(P, family, pi, dpi, context=context)
        print_envelope_report(report)
        self.payload['criterion'] = criterion(P, context.process)
        self.payload['envelope'] = report.to_dict()
        self.payload['multipliers'] = context.multipliers.to_dict()
        self.payload['gradient'] = envelope_gradient(P, family, pi, context=context, seed=seed).tolist()

        if P.n_params:
            table = value_fd_oracle(P, family, pi, dpi, reference=report.total)
            print_fd_table(table)
            self.payload['fd_table'] = table.to_dict()
            self.tables['fd'] = fd_rows(table)

        scans = []
        if self.config.scan_multipliers:
            scans.append(multiplier_continuity_scan(P, family, pi, seed=seed, tol=tol))
        if self.config.scan_adjoint:
            scans.append(adjoint_continuity_scan(P, family, pi, seed=seed, tol=tol))
        if self.config.scan_gradient:
            scans.append(frechet_continuity_check(P, family, pi, seed=seed, tol=tol))
        for scan in scans:
            print_scan(scan)
            self.payload.setdefault('scans', {})[scan.kind] = scan.to_dict()
            self.tables[f"{scan.kind}_shells"] = shell_rows(scan)

        if loaded.spikes is not None:
            study = self._needle_study(P, context.process, loaded.spikes)
            self.payload['needle_study'] = study.to_dict()
        return 0

    def cmd_needle_study(self, loaded: LoadedProblem) -> int:
        """Residuals of the first-order needle expansion along an amplitude ladder"""
        if loaded.spikes is None:
            raise ConfigurationError("needle-study needs spikes: --needle or 'spikes' in the problem file")
        proc = self.candidate(loaded)
        study = self._needle_study(loaded.problem, proc, loaded.spikes)
        self.payload['needle_study'] = study.to_dict()
        return 0

    def _needle_study(self, P: BolzaProblem, proc: Process, spikes: SpikeConfig) -> ResidualStudy:
        S = SpikeList.create(P, spikes.spikes)
        amplitudes = geometric_amplitudes(spikes.amplitudes, spikes.levels, spikes.ratio)
        study = expansion_residual_study(P, proc, S, amplitudes)
        print_residual_study(study)
        self.tables['residuals'] = residual_rows(study)
        return study

    def cmd_shoot(self, loaded: LoadedProblem) -> int:
        """Indirect shooting for the extremal at pi"""
        P = loaded.problem
        result = shooting_solve(P, loaded.pi, tol=loaded.tolerances)
        value = criterion(P, result.process)
        ColoredOutput.success(f"✓ Converged in {result.iterations} iterations")
        ColoredOutput.key_value('criterion', f"{value:.12g}")
        self.payload['criterion'] = value
        self.payload['shooting'] = result.to_dict()
        self.tables['trajectory'] = trajectory_rows(
            {'x': result.process.x, 'u': result.process.u, 'p': result.adjoint.p})
        return 0
