"""Deterministic chunked execution, optionally across a thread pool.

Work is split into contiguous index ranges; each range's result depends only
on its inputs, and results are reassembled in range order, so outputs are
bit-identical for any chunk size or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .validation import DomainError

DEFAULT_CHUNK = 1 << 16


def chunk_ranges(n: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise DomainError("chunk_size must be >= 1")
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def chunked_map(fn, n: int, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> list:
    """Apply ``fn(lo, hi)`` over contiguous ranges covering [0, n); ordered results."""
    ranges = chunk_ranges(n, chunk_size)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def concat_results(parts: list, n_arrays: int) -> tuple[np.ndarray, ...]:
    """Concatenate per-chunk tuples of arrays along axis 0."""
    return tuple(np.concatenate([p[i] for p in parts], axis=0) for i in range(n_arrays))
