import json
import logging
import sys

import pytest

from toothseg_cli import main as cli_main

from .conftest import invoke


def test_help_lists_commands():
    result = invoke("--help")
    assert result.exit_code == 0
    for name in ("phantom", "preprocess", "weak2mask", "coarse", "roi", "fine", "pipeline", "evaluate", "compare"):
        assert name in result.stdout


def test_version_json():
    result = invoke("--json", "version")
    assert result.exit_code == 0
    assert "version" in json.loads(result.stdout)


def test_unknown_command_is_usage_error():
    result = invoke("segment-everything")
    assert result.exit_code == 2


def test_unknown_flag_is_usage_error(tmp_path):
    result = invoke("phantom", "--out", tmp_path, "--colour", "red")
    assert result.exit_code == 2


def test_main_maps_library_errors_to_exit_2(tmp_path, monkeypatch, capsys):
    missing = tmp_path / "missing.vjson"
    monkeypatch.setattr(sys, "argv", ["tseg", "evaluate", "--pred", str(missing), "--gt", str(missing)])
    with pytest.raises(SystemExit) as excinfo:
        cli_main.main()
    assert excinfo.value.code == 2
    assert "Error" in capsys.readouterr().err


def test_debug_env_reraises(tmp_path, monkeypatch):
    from toothseglib import VolumeNotFoundError

    missing = tmp_path / "missing.vjson"
    monkeypatch.setenv("TOOTHSEG_DEBUG", "1")
    monkeypatch.setattr(sys, "argv", ["tseg", "evaluate", "--pred", str(missing), "--gt", str(missing)])
    with pytest.raises(VolumeNotFoundError):
        cli_main.main()


def test_configured_log_level_reaches_stderr(tmp_path):
    from toothseglib import AppConfig

    AppConfig().update(log_level="INFO")
    result = invoke("phantom", "--teeth", "1", "--shape", "96", "--out", tmp_path)
    assert result.exit_code == 0, result.output
    assert "[INFO] toothseglib.stages.phantom" in result.output
    assert logging.getLogger("toothseglib").level == logging.INFO


def test_default_log_level_keeps_info_quiet(tmp_path):
    result = invoke("phantom", "--teeth", "1", "--shape", "96", "--out", tmp_path)
    assert result.exit_code == 0, result.output
    assert "[INFO]" not in result.output
