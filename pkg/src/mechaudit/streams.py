"""Per-trial random streams derived from a master seed.

Trials are grouped into fixed-size blocks. Block ``b`` owns the generator
``default_rng(SeedSequence(seed, spawn_key=(b,)))`` and hands out its draws
row by row, ``width`` uniforms per trial. The uniforms of trial ``j`` therefore
depend only on ``(seed, j, width)``: raising the trial count appends trials
without perturbing earlier ones, and blocks can be generated concurrently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

BLOCK_SIZE = 8192


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def map_blocks(fn: Callable[[np.ndarray], np.ndarray], seed: int, trials: int,
               width: int = 1, workers: int = 1) -> np.ndarray:
    """Apply ``fn`` to every block of uniforms; results concatenated in trial order."""
    starts = list(range(0, trials, BLOCK_SIZE))

    def run(b: int) -> np.ndarray:
        rows = min(BLOCK_SIZE, trials - starts[b])
        return fn(block_rng(seed, b).random((rows, width)))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(starts))))
    else:
        parts = [run(b) for b in range(len(starts))]
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
