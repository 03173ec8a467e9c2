"""Reproducible random streams.

Stream ``(seed, worker)`` is a Philox counter-based generator keyed by
``SeedSequence([seed, worker])``.  A sampling job of ``shots`` draws is split
into ``workers`` contiguous chunks (sizes from :func:`chunk_sizes`); chunk ``i``
consumes stream ``(seed, i)`` from its start, so sample ``k`` of chunk ``i`` is
always produced by the same counter positions.  Aggregates are reduced in
chunk order, which makes results identical for a fixed seed and worker count
whether chunks run serially or in threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")


def stream(seed: int, worker: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(worker)])))


def chunk_sizes(total: int, workers: int) -> list[int]:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base, extra = divmod(int(total), workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def run_chunks(
    job: Callable[[int, np.random.Generator], T],
    total: int,
    seed: int,
    workers: int = 1,
    threads: bool = False,
) -> list[T]:
    """Call ``job(n_i, stream(seed, i))`` for each chunk; results in chunk order."""
    sizes = chunk_sizes(total, workers)
    args = [(n, stream(seed, i)) for i, n in enumerate(sizes)]
    if threads and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda a: job(*a), args))
    return [job(n, g) for n, g in args]
