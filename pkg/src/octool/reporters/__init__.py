"""Report writers for octool commands."""

from .csv_reporter import CsvReporter
from .json_reporter import JsonReporter

__all__ = ['CsvReporter', 'JsonReporter']
