"""
Problem document reader (YAML, JSON, TOML)
"""

import json
from pathlib import Path
from typing import Any, Dict

import yaml

from .errors import ConfigurationError

try:
    import tomllib
except ImportError:  # Python < 3.11
    tomllib = None


def read_text_file(file_path: str) -> str:
    """
    Read a document as string

    Args:
        file_path: Path to the document

    Returns:
        File content as string
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return f.read()
    except FileNotFoundError:
        raise ConfigurationError(f"File not found: {file_path}") from None


def parse_yaml_string(yaml_content: str) -> Any:
    """
    Parse YAML string

    Args:
        yaml_content: YAML content as string

    Returns:
        Parsed YAML document
    """
    try:
        return yaml.safe_load(yaml_content)
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark is not None else ""
        raise ConfigurationError(f"Invalid YAML{where}: {getattr(exc, 'problem', exc)}") from exc


def parse_document(content: str, suffix: str) -> Any:
    """Parse content according to a file suffix; YAML for anything unknown"""
    suffix = suffix.lower()
    if suffix == '.json':
        try:
            return json.loads(content)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"Invalid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    if suffix == '.toml':
        if tomllib is None:
            raise ConfigurationError("TOML problem files need Python 3.11 or newer")
        try:
            return tomllib.loads(content)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"Invalid TOML: {exc}") from exc
    return parse_yaml_string(content)


def read_document(file_path: str) -> Dict[str, Any]:
    """
    Read and parse a problem, spike or control file

    Args:
        file_path: Path to the document

    Returns:
        Top-level mapping of the document
    """
    data = parse_document(read_text_file(file_path), Path(file_path).suffix)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{file_path}: top level must be a mapping")
    return data
