import pytest
from typer.testing import CliRunner

from toothseg_cli.main import app
from toothseglib import AppConfig

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture(scope="module")
def study_dir(tmp_path_factory):
    """A small phantom study written through the CLI itself."""
    out = tmp_path_factory.mktemp("study")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("TOOTHSEG_HOME", str(tmp_path_factory.mktemp("study_home")))
        AppConfig._instance = None
        result = invoke("--seed", "1", "phantom", "--teeth", "8", "--shape", "96", "--out", out)
        AppConfig._instance = None
    assert result.exit_code == 0, result.output
    return out
