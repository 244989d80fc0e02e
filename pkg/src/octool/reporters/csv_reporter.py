"""CSV table writer for plot data."""

import csv
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from ..models import FDTable, ResidualStudy
from ..piecewise import PiecewiseFn
from .json_reporter import format_float


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        text = format_float(float(value))
        return "" if text == "null" else text
    return str(value)


def trajectory_rows(fns: Dict[str, PiecewiseFn], per_segment: int = 16) -> List[Dict[str, Any]]:
    """
    Sample several functions at the same (t, side) points

    Args:
        fns: Named functions on [0, T]; sample points come from the first one
        per_segment: Points per segment of the first function's grid

    Returns:
        Rows with t, side and one column per component (name_0, name_1, ...)
    """
    names = list(fns)
    reference = fns[names[0]]
    rows = []
    for t, side, _ in reference.samples(per_segment):
        row: Dict[str, Any] = {'t': t, 'side': side}
        for name in names:
            value = np.asarray(fns[name].eval(t, side), dtype=float).reshape(-1)
            for k, v in enumerate(value):
                row[f"{name}_{k}"] = float(v)
        rows.append(row)
    return rows


def residual_rows(study: ResidualStudy) -> List[Dict[str, Any]]:
    return [r.to_dict() for r in study.rows]


def fd_rows(table: FDTable) -> List[Dict[str, Any]]:
    return [r.to_dict() for r in table.rows]


class CsvReporter:
    """Writes named tables as <command>_<table>.csv"""

    def __init__(self, command: str, out_dir: Path):
        self.command = command
        self.out_dir = Path(out_dir)

    def write_table(self, name: str, rows: Sequence[Dict[str, Any]]) -> str:
        """Write rows with a header taken from the union of keys in first-seen order"""
        columns: List[str] = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
        output_path = self.out_dir / f"{self.command}_{name}.csv"
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c)) for c in columns])
        return str(output_path)

    def generate(self, tables: Dict[str, Sequence[Dict[str, Any]]]) -> List[str]:
        """Write every table; returns the written paths in table order"""
        return [self.write_table(name, rows) for name, rows in tables.items()]
