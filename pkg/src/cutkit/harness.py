"""Seeded, block-parallel trial execution and aggregation.

Trials are split into fixed-size blocks. Block ``k`` draws from its own
generator seeded by ``SeedSequence(seed, spawn_key=(k,))``, so results depend
only on ``(seed, trials)`` and never on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_BLOCK = 4096


@dataclass
class CutEstimate:
    mean: float
    variance: float
    trials: int
    one_norm: float
    values: np.ndarray | None = None

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.trials) if self.trials else math.inf

    def as_row(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "std_error": self.std_error,
                "trials": self.trials, "one_norm": self.one_norm}


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def run_blocks(fn: Callable[[np.random.Generator, int], np.ndarray], trials: int, seed: int,
               block_size: int = DEFAULT_BLOCK, threads: int | None = None) -> np.ndarray:
    """Evaluate ``fn(rng, count)`` on every block and concatenate in block order."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    counts = [min(block_size, trials - s) for s in range(0, trials, block_size)]
    threads = threads or default_threads()

    def job(k: int) -> np.ndarray:
        return np.asarray(fn(block_generator(seed, k), counts[k]), dtype=float)

    if threads == 1 or len(counts) == 1:
        parts = [job(k) for k in range(len(counts))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(counts))))
    return np.concatenate(parts)


def summarize(values: np.ndarray) -> tuple[float, float]:
    """Mean and unbiased sample variance with compensated summation."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    dev = values - mean
    return mean, math.fsum(dev * dev) / (n - 1)


def make_estimate(values: np.ndarray, one_norm: float, keep_values: bool = False) -> CutEstimate:
    mean, var = summarize(values)
    return CutEstimate(mean, var, len(values), one_norm, values if keep_values else None)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a (possibly unnormalized) probability table."""
    cdf = np.cumsum(np.clip(probs, 0.0, None), axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)
