"""
Colored output utilities using termcolor
"""

from typing import Any, Optional

from termcolor import colored, cprint

from .models import (ContinuityScan, EnvelopeReport, FDTable, FeasibilityReport, PMPCertificate,
                     ResidualStudy, Verdict)


class ColoredOutput:
    """Utility class for colored console output"""

    @staticmethod
    def success(message: str) -> None:
        """Print success message in green"""
        cprint(message, 'green', attrs=['bold'])

    @staticmethod
    def error(message: str) -> None:
        """Print error message in red"""
        cprint(message, 'red', attrs=['bold'])

    @staticmethod
    def warning(message: str) -> None:
        """Print warning message in yellow"""
        cprint(message, 'yellow', attrs=['bold'])

    @staticmethod
    def info(message: str) -> None:
        """Print info message in cyan"""
        cprint(message, 'cyan')

    @staticmethod
    def key_value(key: str, value: Any, indent: int = 0) -> None:
        """Print key-value pair with colors"""
        spaces = "  " * indent
        key_colored = colored(f"{key}:", 'blue', attrs=['bold'])
        value_colored = colored(str(value), 'white')
        print(f"{spaces}{key_colored} {value_colored}")

    @staticmethod
    def section_header(title: str) -> None:
        """Print a section header"""
        print()
        cprint(f"{title}:", 'magenta', attrs=['bold'])

    @staticmethod
    def command_banner(command: str, source: str) -> None:
        """Print the command being run and the problem it runs on"""
        label = colored(' ' + command.upper() + ' ', 'white', 'on_magenta', attrs=['bold'])
        print(f"{label} {colored(source, 'white', attrs=['bold'])}")


_VERDICT_COLORS = {Verdict.PASS: 'green', Verdict.FAIL: 'red', Verdict.NOT_CHECKED: 'yellow'}


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3e}"


def print_feasibility(report: FeasibilityReport) -> None:
    """Print the feasibility residuals of a process"""
    ColoredOutput.section_header("Feasibility")
    ColoredOutput.key_value('dynamics residual', _fmt(report.dynamics_residual), indent=1)
    ColoredOutput.key_value('initial error', _fmt(report.initial_error), indent=1)
    if report.inequality_slacks:
        ColoredOutput.key_value('inequality values', ", ".join(_fmt(v) for v in report.inequality_slacks), indent=1)
    if report.equality_violations:
        ColoredOutput.key_value('equality violations', ", ".join(_fmt(v) for v in report.equality_violations), indent=1)
    if report.feasible:
        ColoredOutput.success("  feasible")
    else:
        ColoredOutput.error("  infeasible")


def print_certificate(cert: PMPCertificate) -> None:
    """
    Print every condition and qualification of a certificate

    Args:
        cert: Certificate returned by verify_certificate
    """
    ColoredOutput.section_header("Multipliers")
    ColoredOutput.key_value('regime', cert.multipliers.regime, indent=1)
    ColoredOutput.key_value('lambda', ", ".join(_fmt(v) for v in cert.multipliers.lambdas), indent=1)
    if len(cert.multipliers.mus):
        ColoredOutput.key_value('mu', ", ".join(_fmt(v) for v in cert.multipliers.mus), indent=1)

    ColoredOutput.section_header("Conditions")
    for name, result in cert.conditions.items():
        color = _VERDICT_COLORS[result.verdict]
        cprint(f"  {name}: {result.verdict.value.upper()}", color, attrs=['bold'])
        ColoredOutput.key_value('residual', _fmt(result.residual), indent=2)
        ColoredOutput.key_value('tolerance', _fmt(result.tolerance), indent=2)
        if result.location is not None:
            ColoredOutput.key_value('at t', f"{result.location:.6g}", indent=2)
        if result.detail:
            ColoredOutput.key_value('detail', result.detail, indent=2)

    ColoredOutput.section_header("Qualification")
    for name, report in cert.qualification.items():
        status = 'PASS' if report.passed else 'FAIL'
        cprint(f"  {name}: {status}", 'green' if report.passed else 'yellow', attrs=['bold'])
        if report.detail:
            ColoredOutput.key_value('detail', report.detail, indent=2)
    print()
    if cert.degenerate:
        ColoredOutput.warning("Certificate is degenerate (no qualification holds or multipliers are not unique)")
    elif cert.all_passed:
        ColoredOutput.success("✓ All maximum-principle conditions hold")
    else:
        failed = [name for name, r in cert.conditions.items() if r.verdict == Verdict.FAIL]
        ColoredOutput.error(f"✗ Failed conditions: {', '.join(failed)}")


def print_envelope_report(report: EnvelopeReport) -> None:
    """Print the five envelope summands and the finite-difference comparison"""
    ColoredOutput.section_header("Envelope")
    ColoredOutput.key_value('direction', ", ".join(f"{v:g}" for v in report.direction), indent=1)
    for name, term in report.terms.items():
        ColoredOutput.key_value(name, f"{term:.12g}", indent=2)
    ColoredOutput.key_value('total', f"{report.total:.12g}", indent=1)
    if report.fd_value is not None:
        ColoredOutput.key_value('forward FD', f"{report.fd_value:.12g}", indent=1)
        ColoredOutput.key_value('|total - FD|', _fmt(report.fd_error), indent=1)
    if report.fd_central is not None:
        ColoredOutput.key_value('central FD', f"{report.fd_central:.12g}", indent=1)
    if report.fd_status not in ("ok", "not requested"):
        ColoredOutput.key_value('FD status', report.fd_status, indent=1)


def print_fd_table(table: FDTable) -> None:
    """Print the value finite-difference oracle"""
    ColoredOutput.section_header("Finite differences")
    for row in table.rows:
        line = f"  h={row.h:.0e}  forward={_fmt(row.forward)}  central={_fmt(row.central)}"
        if row.forward_error is not None:
            line += f"  err={_fmt(row.forward_error)}"
        cprint(line, 'white' if row.status == 'ok' else 'yellow')
    ColoredOutput.key_value('richardson', _fmt(table.richardson), indent=1)
    ColoredOutput.key_value('order', "-" if table.order is None else f"{table.order:.2f}", indent=1)


def print_residual_study(study: ResidualStudy) -> None:
    """Print the needle expansion residual table"""
    ColoredOutput.section_header("Needle expansion")
    for row in study.rows:
        line = (f"  |a|_1={row.norm_a1:.3e}  residual={_fmt(row.residual_norm)}"
                f"  gronwall={_fmt(row.gronwall_ratio)}")
        cprint(line, 'white' if row.status == 'ok' else 'yellow')
        if row.status != 'ok':
            ColoredOutput.key_value('status', row.status, indent=2)
        elif row.halvings:
            ColoredOutput.key_value('halved', f"{row.halvings}x from {row.requested_a1:.3e}", indent=2)
    ColoredOutput.key_value('order', "-" if study.order is None else f"{study.order:.2f}", indent=1)
    ColoredOutput.key_value('k1', _fmt(study.k1), indent=1)


def print_scan(scan: ContinuityScan) -> None:
    """Print shell deviations of a continuity scan"""
    ColoredOutput.section_header(f"{scan.kind.capitalize()} continuity")
    for shell in scan.shells:
        ColoredOutput.key_value(f"r={shell.radius:.0e}", f"{_fmt(shell.max_deviation)} ({shell.status})", indent=1)
    if scan.monotone:
        ColoredOutput.success("  deviations decrease monotonically")
    else:
        ColoredOutput.warning("  deviations are not monotone")

