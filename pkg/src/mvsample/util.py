"""Shared helpers: thread pool sizing, deterministic JSON output."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
U = TypeVar("U")


def thread_count() -> int:
    """Worker thread cap from MV_THREADS (0 or unset = auto)."""
    raw = os.environ.get("MV_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MV_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError("MV_THREADS must be >= 0")
    if n == 0:
        return min(os.cpu_count() or 1, 8)
    return n


def parallel_map(fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
    """Order-preserving map, threaded when MV_THREADS allows.

    Results are independent of the schedule: output i is fn(items[i]).
    """
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def write_json(path, obj) -> None:
    """Write JSON with a stable layout (insertion order, 2-space indent)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
