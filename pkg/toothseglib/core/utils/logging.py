"""Logging for the ``toothseglib`` package logger.

Importing the library adds no handlers, so batch runs and tests stay quiet.
Two switches turn output on:

- Environment, read the first time a module asks for a logger:
  TOOTHSEG_LOG_LEVEL=INFO|DEBUG|... sets the level, TOOTHSEG_DEBUG=1 means
  DEBUG. TOOTHSEG_LOG_LEVEL wins when both are set.
- ``configure_logging(level)``, called by ``tseg`` with the configured
  ``log_level``. The environment still wins over the level passed in.

The root logger is never touched.

>>> resolve_level("warning", environ={})
30
>>> resolve_level("warning", environ={"TOOTHSEG_DEBUG": "1"})
10
>>> resolve_level(None, environ={"TOOTHSEG_LOG_LEVEL": "chatty"})
20
>>> resolve_level(None, environ={}) is None
True
"""

from __future__ import annotations

import logging
import os
import sys
from collections.abc import Mapping

PACKAGE_LOGGER = "toothseglib"
LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

_CONFIGURED = False


class _PackageHandler(logging.StreamHandler):
    """The one handler ``configure_logging`` owns on the package logger."""


def _level_number(name: str) -> int | None:
    value = logging.getLevelName(name.strip().upper())
    return value if isinstance(value, int) else None


def resolve_level(
    configured: str | int | None = None, *, environ: Mapping[str, str] | None = None
) -> int | None:
    """Effective level: TOOTHSEG_LOG_LEVEL, then TOOTHSEG_DEBUG, then ``configured``.

    An unknown TOOTHSEG_LOG_LEVEL means INFO.

    Raises:
        ValueError: ``configured`` is not a logging level name.
    """
    env = os.environ if environ is None else environ
    explicit = env.get("TOOTHSEG_LOG_LEVEL")
    if explicit:
        return _level_number(explicit) or logging.INFO
    if env.get("TOOTHSEG_DEBUG"):
        return logging.DEBUG
    if configured is None or isinstance(configured, int):
        return configured
    level = _level_number(configured)
    if level is None:
        raise ValueError(f"unknown log level {configured!r}")
    return level


def configure_logging(
    level: str | int | None = None, *, logger_name: str = PACKAGE_LOGGER
) -> logging.Logger | None:
    """Give the package logger one stderr handler at the resolved level.

    Returns the logger, or ``None`` when neither the environment nor
    ``level`` asks for output. Calling it again updates the level and points
    the handler at the current ``sys.stderr``.
    """
    global _CONFIGURED

    resolved = resolve_level(level)
    if resolved is None:
        return None

    base_logger = logging.getLogger(logger_name)
    base_logger.setLevel(resolved)
    handler = next((h for h in base_logger.handlers if isinstance(h, _PackageHandler)), None)
    if handler is None:
        handler = _PackageHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        base_logger.addHandler(handler)
    handler.stream = sys.stderr
    handler.setLevel(resolved)

    # Don't double-log through the root logger.
    base_logger.propagate = False

    _CONFIGURED = True
    return base_logger


def configure_from_env(*, logger_name: str = PACKAGE_LOGGER) -> None:
    """Apply the environment switches once, if any is set."""
    if not _CONFIGURED:
        configure_logging(None, logger_name=logger_name)


def get_logger(name: str = PACKAGE_LOGGER) -> logging.Logger:
    """Logger under the package, after the environment switches are applied."""
    configure_from_env()
    return logging.getLogger(name)
