"""
Data I/O
CSV matrices, JSON/YAML config files and the compact command-line grammars
"""

import csv
import json
import logging
import os
from typing import Any, Dict, List

import numpy as np
import yaml

from utils.errors import ConfigError, DataFormatError

logger = logging.getLogger(__name__)


def read_matrix_csv(path) -> np.ndarray:
    """
    Read a numeric matrix: one row per line, '.' decimal, no header

    Args:
        path: CSV file path

    Returns:
        2-D float array

    Raises:
        ConfigError: file missing or empty, or rows of different length
        DataFormatError: a cell that does not parse as a finite number (1-based row/column)
    """
    if not os.path.exists(path):
        raise ConfigError(f"File not found: {path}", field="data")

    rows: List[List[float]] = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row_number, row in enumerate(csv.reader(f), start=1):
            # Skip blank lines
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for column_number, cell in enumerate(row, start=1):
                try:
                    value = float(cell.strip())
                except ValueError:
                    raise DataFormatError(f"non-numeric cell {cell!r}", row_number, column_number)
                if not np.isfinite(value):
                    raise DataFormatError(f"non-finite cell {cell!r}", row_number, column_number)
                values.append(value)
            if rows and len(values) != len(rows[0]):
                raise DataFormatError(
                    f"expected {len(rows[0])} columns, found {len(values)}", row_number, len(values)
                )
            rows.append(values)

    if not rows:
        raise ConfigError(f"No data rows in {path}", field="data")
    return np.array(rows, dtype=float)


def write_matrix_csv(path, matrix: np.ndarray):
    """Write a matrix in the same CSV convention, full precision"""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in matrix:
            writer.writerow([f"{value:.17g}" for value in row])


def load_config_file(path) -> Dict[str, Any]:
    """
    Load an experiment config from JSON, or YAML for .yaml/.yml files

    Raises:
        ConfigError: missing file, parse failure, or a top level that is not a mapping
    """
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}", field="config")

    try:
        with open(path, "r", encoding="utf-8") as f:
            if str(path).lower().endswith((".yaml", ".yml")):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not parse {path}: {str(e)}", field="config")

    if not isinstance(data, dict):
        raise ConfigError("Top level must be a mapping", field="config")
    return data


def write_json(path, data: Dict[str, Any]):
    """Deterministic JSON dump (sorted keys, indent=2)"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _parse_number(text: str, field: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"Expected a number, got {text!r}", field=field)


def _parse_count(text: str, field: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"Expected an integer, got {text!r}", field=field)
    if value < 1:
        raise ConfigError(f"Expected a positive integer, got {value}", field=field)
    return value


def parse_sigma_spec(text: str) -> Dict[str, Any]:
    """
    Parse the compact covariance grammar into a covariance config mapping

    identity:<d>, diag:<v1,...>, polydecay:<d>:<alpha>, expdecay:<d>:<gamma>,
    spiked:<d>:<k>:<strength>
    """
    parts = text.strip().split(":")
    kind = parts[0].lower()

    if kind == "identity" and len(parts) == 2:
        return {"kind": "identity", "d": _parse_count(parts[1], "sigma")}
    if kind == "diag" and len(parts) == 2:
        values = [_parse_number(v, "sigma") for v in parts[1].split(",") if v.strip()]
        if not values:
            raise ConfigError("diag needs at least one value", field="sigma")
        return {"kind": "diag", "d": len(values), "values": values}
    if kind == "polydecay" and len(parts) == 3:
        return {"kind": "polydecay", "d": _parse_count(parts[1], "sigma"), "alpha": _parse_number(parts[2], "sigma")}
    if kind == "expdecay" and len(parts) == 3:
        return {"kind": "expdecay", "d": _parse_count(parts[1], "sigma"), "gamma": _parse_number(parts[2], "sigma")}
    if kind == "spiked" and len(parts) == 4:
        return {
            "kind": "spiked",
            "d": _parse_count(parts[1], "sigma"),
            "k": _parse_count(parts[2], "sigma"),
            "strength": _parse_number(parts[3], "sigma"),
        }

    raise ConfigError(
        f"Unrecognized sigma spec {text!r}; expected identity:<d>, diag:<v1,...>, "
        "polydecay:<d>:<alpha>, expdecay:<d>:<gamma> or spiked:<d>:<k>:<strength>",
        field="sigma",
    )


def parse_vector_spec(text: str, d: int) -> np.ndarray:
    """
    Parse a direction: e<i> (1-based basis vector) or a comma-separated list of d numbers
    """
    text = text.strip()
    if text.lower().startswith("e") and text[1:].isdigit():
        index = int(text[1:])
        if not 1 <= index <= d:
            raise ConfigError(f"Basis index {index} outside 1..{d}", field="v")
        v = np.zeros(d)
        v[index - 1] = 1.0
        return v

    values = [_parse_number(part, "v") for part in text.split(",")]
    if len(values) != d:
        raise ConfigError(f"Expected {d} components, got {len(values)}", field="v")
    return np.array(values, dtype=float)
