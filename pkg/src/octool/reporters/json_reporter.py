"""JSON report writer with a fixed 17-significant-digit float format."""

import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .. import __version__


def format_float(value: float) -> str:
    """17 significant digits; non-finite values become null"""
    if not math.isfinite(value):
        return "null"
    text = format(value, '.17g')
    if '.' not in text and 'e' not in text:
        text += '.0'
    return text


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    return value


def dumps(value: Any, indent: int = 2, _level: int = 0) -> str:
    """
    Serialize a report tree

    Key order is insertion order, so identical inputs give identical text.

    Args:
        value: dicts, lists, strings, numbers, numpy values or objects with to_dict()
        indent: Spaces per nesting level

    Returns:
        JSON text
    """
    value = _plain(value)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(isinstance(_plain(v), (int, float)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in value) + "]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"Cannot serialize {type(value).__name__} into a report")


class JsonReporter:
    """Writes one command report as <command>.json"""

    def __init__(self, command: str, out_dir: Path, timestamp: bool = True):
        """
        Initialize the JSON reporter.

        Args:
            command: Command whose report is written
            out_dir: Report directory
            timestamp: Include the generation time
        """
        self.command = command
        self.out_dir = Path(out_dir)
        self.timestamp = timestamp
        self.generated_time = datetime.now()

    def build(self, payload: Dict[str, Any], exit_code: int) -> Dict[str, Any]:
        report = {'command': self.command, 'version': __version__, 'exit_code': exit_code}
        if self.timestamp:
            report['generated'] = self.generated_time.isoformat(timespec='seconds')
        report.update(payload)
        return report

    def generate(self, payload: Dict[str, Any], exit_code: int, report_path: Optional[str] = None) -> str:
        """
        Write the report.

        Args:
            payload: Command results
            exit_code: Exit code the command finishes with
            report_path: Optional explicit file path

        Returns:
            Path to the generated report file
        """
        output_path = Path(report_path) if report_path else self.out_dir / f"{self.command}.json"
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(dumps(self.build(payload, exit_code)) + "\n", encoding='utf-8')
        return str(output_path)
