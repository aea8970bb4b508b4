"""Deterministic chunked parallelism for triangle-indexed reductions.

Large contractions over the triangle axis are split into fixed-size chunks.
Chunks may be evaluated concurrently (numpy releases the GIL inside BLAS),
but partial results are always combined in ascending chunk order, so the
result is bitwise independent of the worker count.  The CLI pins the BLAS
library itself to one thread per call; parallelism across chunks is provided
here instead.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

# Fixed chunk length (triangles). Part of the numerical contract: changing it
# changes summation order and hence low-order bits of assembled systems.
CHUNK = 2048

_max_workers = None  # lazily resolved from env / cpu count


def thread_count() -> int:
    global _max_workers
    if _max_workers is None:
        env = os.environ.get("SPHEREFLOW_THREADS", "")
        try:
            n = int(env)
        except ValueError:
            n = 0
        _max_workers = n if n >= 1 else (os.cpu_count() or 1)
    return _max_workers


def set_thread_count(n: int) -> None:
    global _max_workers
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _max_workers = n


def chunk_ranges(total: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def map_chunks(fn: Callable[[int, int], object], total: int,
               chunk: int = CHUNK) -> list:
    """Evaluate fn(lo, hi) over fixed chunks, returned in chunk order."""
    ranges = chunk_ranges(total, chunk)
    workers = min(thread_count(), len(ranges))
    if workers <= 1 or len(ranges) == 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def reduce_chunks(fn: Callable[[int, int], object], total: int,
                  chunk: int = CHUNK):
    """Sum fn(lo, hi) partials in fixed ascending chunk order."""
    partials = map_chunks(fn, total, chunk)
    acc = partials[0]
    for part in partials[1:]:
        acc = acc + part
    return acc
