"""
Report Store
Persists experiment reports (JSON + per-trial CSV), sweep tables with a plot script,
and times the phases of a run
"""

import csv
import logging
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional, Sequence

import config
from utils.data_io import write_json

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("n", "d", "t", "s", "statistic_median", "bound_value", "violation_rate", "valid", "error")


class RunTracker:
    """
    Wall time of a run and of its named phases

    Only the metadata block of a report uses these numbers; everything else in a
    report is deterministic.
    """

    def __init__(self, operation_type: str):
        self.operation_type = operation_type
        self.start_time = time.perf_counter()
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.phase_timings: Dict[str, float] = {}
        self.current_phase: Optional[str] = None

    @contextmanager
    def phase(self, name: str):
        previous = self.current_phase
        self.current_phase = name
        start = time.perf_counter()
        try:
            yield self
        finally:
            self.phase_timings[name] = self.phase_timings.get(name, 0.0) + time.perf_counter() - start
            self.current_phase = previous

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start_time

    def get_summary(self, **extra) -> Dict[str, Any]:
        summary = {
            "operation_type": self.operation_type,
            "started_at": self.started_at,
            "wall_time": self.elapsed,
            "phase_timings": dict(self.phase_timings),
        }
        summary.update(extra)
        return summary


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_rows_csv(path, columns: Sequence[str], rows: Iterable[Dict[str, Any]]):
    """Header plus one line per row; missing cells stay empty"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(column)) for column in columns])


def save_report(report: Dict[str, Any], out_dir: Optional[str], name: str,
                per_trial: Optional[List[Dict[str, Any]]] = None) -> Dict[str, str]:
    """
    Write <name>.json and, when per-trial rows are given, <name>_trials.csv

    Args:
        report: JSON-ready report, schema_version added when missing
        out_dir: Target directory (config.REPORTS_DIR when None)
        name: File stem
        per_trial: Rows with a 'trial' and a 'statistic' column, plus auxiliary columns

    Returns:
        Mapping of written file kinds to paths
    """
    out_dir = out_dir or config.REPORTS_DIR
    report = dict(report)
    report.setdefault("schema_version", config.REPORT_SCHEMA_VERSION)

    paths = {"json": os.path.join(out_dir, f"{name}.json")}
    try:
        write_json(paths["json"], report)
        if per_trial:
            columns = ["trial", "statistic"]
            for row in per_trial:
                columns.extend(key for key in row if key not in columns)
            paths["csv"] = os.path.join(out_dir, f"{name}_trials.csv")
            write_rows_csv(paths["csv"], columns, per_trial)
    except OSError as e:
        logger.error(f"Error saving report {name}: {str(e)}")
        raise

    logger.info(f"Report written to {paths['json']}")
    return paths


def gnuplot_script(csv_name: str, title: str) -> str:
    """Plot of statistic median and bound value against n, log-log"""
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale xy",
        "set xlabel 'n'",
        "set ylabel 'deviation'",
        f"set title '{title}'",
        f"plot '{csv_name}' using 1:5 with linespoints title 'statistic median', \\",
        f"     '{csv_name}' using 1:6 with lines title 'bound'",
        "",
    ])


def save_sweep(rows: List[Dict[str, Any]], out_dir: Optional[str], name: str) -> Dict[str, str]:
    """Long-form sweep CSV plus a gnuplot script next to it"""
    out_dir = out_dir or config.REPORTS_DIR
    csv_path = os.path.join(out_dir, f"{name}.csv")
    gp_path = os.path.join(out_dir, f"{name}.gp")
    write_rows_csv(csv_path, SWEEP_COLUMNS, rows)
    with open(gp_path, "w", encoding="utf-8") as f:
        f.write(gnuplot_script(os.path.basename(csv_path), name))
    logger.info(f"Sweep table written to {csv_path}")
    return {"csv": csv_path, "gp": gp_path}
