"""Order-preserving worker pool used by the sampling phases."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: int | None) -> int:
    """Return a positive worker count; 0 or None means one per logical core."""
    if not threads or threads < 1:
        return os.cpu_count() or 1
    return threads


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int | None = 1) -> List[R]:
    """Apply ``func`` to every item, returning results in submission order.

    numpy releases the GIL inside its array kernels, so threads give real
    speedups for the vectorised orbit loops while keeping merges trivial.
    """
    items = list(items)
    workers = min(resolve_threads(threads), max(1, len(items)))
    if workers <= 1:
        return [func(item) for item in items]
    logger.debug(f"parallel_map: {len(items)} tasks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent, reproducible random substreams for ``count`` tasks."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def chunk_slices(total: int, chunks: int) -> List[slice]:
    """Split ``range(total)`` into at most ``chunks`` contiguous slices."""
    chunks = max(1, min(chunks, total)) if total else 1
    bounds = np.linspace(0, total, chunks + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
