"""Replica fan-out whose results do not depend on the worker count.

Each task is a pure function of its own arguments (replica index, config,
stream); results are collected in task order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

from .errors import ConfigError


def replica_map(fn: Callable, tasks: Iterable[Sequence], workers: int = 1) -> list:
    """[fn(*t) for t in tasks], optionally spread over a process pool; ``fn`` must be module-level."""
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    tasks = list(tasks)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks), chunksize=chunk))
