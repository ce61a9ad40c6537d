"""
Progress Utilities
Remaining-time estimates and a text progress bar for long Monte Carlo runs, reported through logging
"""

import logging
import math
import time
from typing import Any, Dict, Optional

import config

logger = logging.getLogger(__name__)

BAR_WIDTH = 20
BAR_GLYPHS = {"open": "[", "close": "]", "done": "#", "todo": "."}


def format_time(seconds: float) -> str:
    """
    Render a duration for progress lines

    Args:
        seconds: Duration in seconds (NaN or negative when unknown)

    Returns:
        "<1s", "45s", "2m 5s", "2h 30m 45s" or "unknown"
    """
    if math.isnan(seconds) or seconds < 0:
        return "unknown"
    if seconds < 1:
        return "<1s"

    whole = int(seconds)
    units = (("h", whole // 3600), ("m", whole % 3600 // 60), ("s", whole % 60))
    # Drop leading zero units, keep the rest
    while units[0][1] == 0 and len(units) > 1:
        units = units[1:]
    return " ".join(f"{value}{unit}" for unit, value in units)


class ETACalculator:
    """
    Remaining time from the average time per finished trial

    Args:
        total_items: Number of trials in the run
    """

    def __init__(self, total_items: int):
        self.total_items = total_items
        self.done = 0
        self.t0: Optional[float] = None

    def start(self) -> "ETACalculator":
        self.t0 = time.monotonic()
        return self

    def update(self, done: int) -> Dict[str, Any]:
        """Snapshot after `done` trials: percentage, elapsed and remaining seconds, throughput"""
        if self.t0 is None:
            self.start()
        self.done = done
        elapsed = time.monotonic() - self.t0

        if self.total_items > 0:
            pct = 100.0 * done / self.total_items
        else:
            pct = 100.0
        if done > 0:
            remaining = elapsed / done * (self.total_items - done)
            rate = done / elapsed if elapsed > 0 else math.inf
        else:
            remaining = math.nan
            rate = 0.0

        return {
            "progress_pct": pct,
            "completed": done,
            "total": self.total_items,
            "elapsed_seconds": elapsed,
            "elapsed_str": format_time(elapsed),
            "remaining_seconds": remaining,
            "remaining_str": format_time(remaining),
            "items_per_second": rate,
        }


class ProgressBar:
    """
    Text progress bar logged at INFO, at most one line per interval

    Args:
        total: Number of trials
        label: Prefix of every line
        width: Bar width in characters
        interval: Minimum seconds between lines; the final line is always logged
    """

    def __init__(self, total: int, label: str = "trials", width: int = BAR_WIDTH,
                 interval: Optional[float] = None, glyphs: Optional[Dict[str, str]] = None):
        self.total = total
        self.label = label
        self.width = width
        self.interval = config.PROGRESS_LOG_INTERVAL if interval is None else interval
        self.glyphs = glyphs or BAR_GLYPHS
        self.eta = ETACalculator(total).start()
        self._last_logged: Optional[float] = None

    def render(self, current: int) -> str:
        snapshot = self.eta.update(current)
        filled = self.width if self.total <= 0 else min(self.width, self.width * current // self.total)
        g = self.glyphs
        bar = g["open"] + g["done"] * filled + g["todo"] * (self.width - filled) + g["close"]
        pct = min(100.0, snapshot["progress_pct"])
        return (
            f"{self.label} {bar} {pct:.1f}% ({current}/{self.total}) "
            f"Elapsed: {snapshot['elapsed_str']} | Remaining: {snapshot['remaining_str']}"
        )

    def update(self, current: int) -> Optional[str]:
        """Log and return a line when due (or at completion), otherwise return None"""
        now = time.monotonic()
        throttled = self._last_logged is not None and now - self._last_logged < self.interval
        if throttled and current < self.total:
            return None
        self._last_logged = now
        line = self.render(current)
        logger.info(line)
        return line
