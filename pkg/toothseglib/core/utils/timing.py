"""Wall-clock timing of pipeline stages."""

from __future__ import annotations

import time
from collections.abc import Iterator
from contextlib import contextmanager

from toothseglib.core.utils.logging import get_logger


class StageTimer:
    """Accumulates per-stage wall-clock seconds.

    Example:
        >>> timer = StageTimer()
        >>> with timer.stage("load"):
        ...     pass
        >>> list(timer.timings)
        ['load']
        >>> timer.timings["load"] >= 0.0
        True
    """

    def __init__(self) -> None:
        self.timings: dict[str, float] = {}
        self._logger = get_logger("toothseglib.timing")

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time the enclosed block and add it under ``name``."""
        start = time.perf_counter()
        self._logger.info("Stage %s started", name)
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[name] = self.timings.get(name, 0.0) + elapsed
            self._logger.info("Stage %s finished in %.3fs", name, elapsed)
