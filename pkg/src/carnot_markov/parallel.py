"""Seeded RNG streams and an order-preserving thread map."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for partition ``keys`` of a run; independent of worker count."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def chunks(total: int, size: int) -> list[tuple[int, int]]:
    """(index, length) pairs covering ``total`` items in blocks of ``size``."""
    return [(k, min(size, total - k * size)) for k in range((total + size - 1) // size)]


def pmap(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
