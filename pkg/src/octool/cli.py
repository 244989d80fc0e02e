"""Command-line interface for octool."""

import sys

from .args import parse_arguments
from .command_runner import CommandRunner
from .errors import ConfigurationError
from .output import ColoredOutput


def _use_utf8_console():
    """Some Windows consoles default stdout/stderr to a legacy codepage (e.g. cp1252),
    which raises UnicodeEncodeError on the checkmarks used in console output."""
    for stream in (sys.stdout, sys.stderr):
        if hasattr(stream, 'reconfigure'):
            try:
                stream.reconfigure(encoding='utf-8', errors='replace')
            except Exception:
                pass


def main(argv=None) -> int:
    """Main entry point for CLI."""
    _use_utf8_console()
    try:
        parse_arguments(argv)
    except ConfigurationError as exc:
        ColoredOutput.error(f"✗ {exc}")
        return 1

    try:
        return CommandRunner().run()
    except KeyboardInterrupt:
        ColoredOutput.warning("Interrupted by user")
        return 130


if __name__ == '__main__':
    sys.exit(main())
