"""Order-preserving parallel map for per-tooth work.

Workers are threads, so volumes are shared between them, never pickled.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from itertools import islice
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(
    func: Callable[[T], R],
    items: Iterable[T],
    *,
    jobs: int = 1,
) -> Iterator[R]:
    """Apply ``func`` to ``items`` yielding results in input order.

    At most ``jobs`` results are in flight at once, so memory stays bounded
    when each result is a full volume.

    Example:
        >>> list(map_ordered(lambda x: x * x, range(5), jobs=2))
        [0, 1, 4, 9, 16]

    Args:
        func: Function applied to each item.
        items: Input items.
        jobs: Worker count; 1 runs inline.

    Yields:
        ``func(item)`` for each item, in order.
    """
    if jobs <= 1:
        for item in items:
            yield func(item)
        return

    iterator = iter(items)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        while True:
            batch = list(islice(iterator, jobs))
            if not batch:
                break
            yield from pool.map(func, batch)
