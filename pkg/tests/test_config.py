"""Tests for the configuration management system."""

import json

import pytest

from toothseglib.core.config import AppConfig, Config


@pytest.fixture
def clean_config(isolated_config):
    """Fresh AppConfig rooted at the per-test TOOTHSEG_HOME."""
    AppConfig._instance = None
    return AppConfig()


def test_defaults_are_published_hyperparameters(clean_config):
    """A fresh config carries the default run parameters."""
    config = clean_config.config
    assert config.coarse_spacing_mm == 1.0
    assert config.margin_mm == 3.0
    assert (config.lo_pct, config.hi_pct) == (5.0, 99.5)
    assert (config.energy_k, config.energy_tau) == (-100.0, 300.0)


def test_first_load_writes_file(clean_config, isolated_config):
    """Loading without a config file creates one."""
    path = isolated_config / "config.json"
    assert path.exists()
    assert json.loads(path.read_text())["margin_mm"] == 3.0


def test_update_persists(clean_config):
    """Updated values survive a reload."""
    clean_config.update(margin_mm=4.5, jobs=3)

    AppConfig._instance = None
    reloaded = AppConfig()

    assert reloaded.config.margin_mm == 4.5
    assert reloaded.config.jobs == 3


def test_update_rejects_unknown_key(clean_config):
    with pytest.raises(KeyError):
        clean_config.update(theme="dark")


def test_corrupt_file_falls_back_to_defaults(isolated_config):
    """A corrupt config file logs an error and uses defaults."""
    (isolated_config / "config.json").write_text("{broken")
    AppConfig._instance = None
    assert AppConfig().config == Config()


def test_config_from_dict_ignores_unknown_keys():
    """Verify from_dict ignores extra/unknown keys for forward compatibility."""
    data = {"margin_mm": 2.0, "unknown_future_key": "some_value"}
    config = Config.from_dict(data)

    assert config.margin_mm == 2.0


def test_config_from_dict_uses_defaults_for_missing_keys():
    """Verify from_dict uses defaults when keys are missing."""
    config = Config.from_dict({"stitch_threshold": 0.6})

    assert config.stitch_threshold == 0.6
    assert config.connectivity == 26
    assert config.distance_mode == "min"


def test_slope_for_manufacturer():
    config = Config(energy_k=-90.0, manufacturer_k={"acme": -55.0})
    assert config.slope_for("acme") == -55.0
    assert config.slope_for("unknown") == -90.0
    assert config.slope_for(None) == -90.0
