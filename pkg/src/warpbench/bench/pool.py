"""Benchmark thread pool: fork/join phases with full barriers between.

Workers are plain threads; a phase hands each worker (worker_id, *args)
and collects their return values. Any worker exception fails the phase
after all threads have been joined, so a crash cannot leave stragglers
mutating a table that the harness believes is quiescent.
"""

from __future__ import annotations

import os
import threading
import time


def default_threads() -> int:
    env = os.environ.get("WARPBENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_phase(worker, n_threads: int, *args):
    """Run worker(worker_id, *args) on n_threads threads; list of results.

    Raises the first worker exception after joining everyone.
    """
    if n_threads == 1:
        return [worker(0, *args)]
    results = [None] * n_threads
    errors = []

    def body(wid):
        try:
            results[wid] = worker(wid, *args)
        except BaseException as exc:  # noqa: BLE001 - reraised below
            errors.append(exc)

    threads = [threading.Thread(target=body, args=(i,), daemon=True)
               for i in range(n_threads)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return list(results)


class TimedPhase:
    """Context manager measuring one phase's wall time."""

    def __enter__(self):
        self.seconds = 0.0
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._t0
        return False


def chunk_bounds(total: int, parts: int):
    """Split range(total) into `parts` contiguous [lo, hi) chunks."""
    base = total // parts
    extra = total % parts
    bounds = []
    lo = 0
    for i in range(parts):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds
