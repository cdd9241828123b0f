"""Pytest configuration and shared fixtures.

Every test gets its own config home so the user's ~/.toothseg is never read
or written. Phantom studies are generated once per session.
"""

from __future__ import annotations

import logging

import pytest

from tests.phantoms import Study, make_study
from toothseglib.core.config import AppConfig
from toothseglib.core.utils import logging as tlogging


@pytest.fixture(autouse=True)
def isolated_config(tmp_path_factory, monkeypatch):
    """Fresh TOOTHSEG_HOME, AppConfig singleton and package logger for every test."""
    home = tmp_path_factory.mktemp("toothseg_home")
    monkeypatch.setenv("TOOTHSEG_HOME", str(home))
    monkeypatch.delenv("TOOTHSEG_DEBUG", raising=False)
    monkeypatch.delenv("TOOTHSEG_LOG_LEVEL", raising=False)
    AppConfig._instance = None
    package_logger = logging.getLogger(tlogging.PACKAGE_LOGGER)
    saved = (list(package_logger.handlers), package_logger.level, package_logger.propagate)
    monkeypatch.setattr(tlogging, "_CONFIGURED", tlogging._CONFIGURED)
    yield home
    AppConfig._instance = None
    handlers, level, propagate = saved
    package_logger.handlers[:] = handlers
    package_logger.setLevel(level)
    package_logger.propagate = propagate


@pytest.fixture(scope="session")
def small_study() -> Study:
    """Noise-free 8-tooth study, 96^3 voxels at 0.4 mm."""
    return make_study()


@pytest.fixture(scope="session")
def single_tooth_study() -> Study:
    return make_study(n_teeth=1, seed=3)
