"""
Worker Pool
Runs independent trials on a thread pool from an asyncio loop, results stored by index
"""

import asyncio
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional

from utils.errors import DomainError
from utils.progress import ProgressBar

logger = logging.getLogger(__name__)


class TrialPool:
    """
    Execute fn(i) for i in range(count) on up to `threads` worker threads

    Every result lands in slot i regardless of completion order, so the output is
    independent of the thread count as long as fn(i) depends on i alone.

    Args:
        threads: Worker count, at least 1
        progress_label: Label of the progress lines (None disables progress logging)
    """

    def __init__(self, threads: int = 1, progress_label: Optional[str] = "trials"):
        if int(threads) < 1:
            raise DomainError(f"threads must be >= 1, got {threads}")
        self.threads = int(threads)
        self.progress_label = progress_label

    def map(self, fn: Callable[[int], Any], count: int) -> List[Any]:
        """
        Run fn over range(count) and return the results in index order

        Raises:
            The first exception raised by any trial
        """
        if count < 0:
            raise DomainError(f"count must be >= 0, got {count}")
        if count == 0:
            return []
        if self.threads == 1:
            return self._map_serial(fn, count)
        return asyncio.run(self._map_async(fn, count))

    def _map_serial(self, fn, count):
        progress = ProgressBar(count, self.progress_label) if self.progress_label else None
        results = []
        for i in range(count):
            results.append(fn(i))
            if progress:
                progress.update(i + 1)
        return results

    async def _map_async(self, fn, count):
        loop = asyncio.get_running_loop()
        results: List[Any] = [None] * count
        progress = ProgressBar(count, self.progress_label) if self.progress_label else None
        lock = threading.Lock()
        completed = 0

        def run(index):
            nonlocal completed
            value = fn(index)
            with lock:
                completed += 1
                if progress:
                    progress.update(completed)
            return index, value

        with ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="trial") as executor:
            tasks = [loop.run_in_executor(executor, run, i) for i in range(count)]
            try:
                for index, value in await asyncio.gather(*tasks):
                    results[index] = value
            except Exception as e:
                logger.error(f"Trial failed: {e}")
                for task in tasks:
                    task.cancel()
                raise
        return results


def run_trials(fn: Callable[[int], Any], count: int, threads: int = 1,
               progress_label: Optional[str] = "trials") -> List[Any]:
    """Shorthand for TrialPool(threads, progress_label).map(fn, count)"""
    return TrialPool(threads, progress_label).map(fn, count)
