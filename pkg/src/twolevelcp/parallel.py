"""Replicate-parallel map with thread-count-independent results."""
from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def map_replicates(fn: Callable[[int], T], reps: int, threads: int = 1, progress: bool = False) -> list[T]:
    """``[fn(r) for r in range(reps)]``, optionally across threads.

    Each replicate derives its own seed from ``r``, so the output (kept in
    replicate order) does not depend on ``threads``.
    """
    threads = max(1, int(threads))
    if threads == 1:
        out = []
        for r in range(reps):
            out.append(fn(r))
            if progress and (r + 1) % max(1, reps // 10) == 0:
                print(f"  {r + 1}/{reps}", file=sys.stderr)
        return out
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(reps)))
