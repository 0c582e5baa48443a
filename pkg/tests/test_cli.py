import json
import textwrap

import pytest

from supershear.cli import main
from supershear.config import RunConfig, load_config
from supershear.errors import ConfigError
from supershear.runner import ENERGY_COLUMNS, FINAL_COLUMNS, RESIDUAL_COLUMNS

SMALL = ["--n1", "16", "--n2", "64"]


def _ini(tmp_path, body: str):
    path = tmp_path / "c.ini"
    path.write_text(textwrap.dedent(body))
    return path


def test_default_config_file_matches_builtin_defaults():
    assert load_config("configs/default.ini", env={}) == RunConfig(flow_kw=load_config(
        "configs/default.ini", env={}).flow_kw)
    assert load_config("configs/default.ini", env={}).params == RunConfig().params


def test_case_sensitive_keys(tmp_path):
    cfg = load_config(_ini(tmp_path, "[params]\nL = 0.05\n[run]\nlayer_Y_max = 10\n"), env={})
    assert cfg.params.L == 0.05 and cfg.layer_Y_max == 10.0


def test_unknown_key_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_ini(tmp_path, "[grid]\nnx = 3\n"), env={})


def test_flow_keyword_mismatch_is_config_error(tmp_path):
    cfg = load_config(_ini(tmp_path, "[flow]\nkind = constant\nkappa = 0.3\n"), env={})
    with pytest.raises(ConfigError):
        cfg.flow()


def test_environment_and_override_precedence(tmp_path):
    path = _ini(tmp_path, "[run]\nout = from-file\n")
    assert str(load_config(path, env={}).out) == "from-file"
    assert str(load_config(path, env={"SUPERSHEAR_OUT": "from-env"}).out) == "from-env"
    assert str(load_config(path, {"out": "from-flag"}, env={"SUPERSHEAR_OUT": "from-env"}).out) == "from-flag"


def test_run_exit_code_and_tables(tmp_path, capsys):
    code = main(["run", "--eps", "0.1", "--out", str(tmp_path)] + SMALL)
    assert code in (0, 1)
    assert "overall:" in capsys.readouterr().out
    for name, cols in (("residuals.csv", RESIDUAL_COLUMNS), ("final.csv", FINAL_COLUMNS),
                       ("energy.csv", ENERGY_COLUMNS)):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0] == ",".join(cols) and len(lines) == 2


def test_unknown_config_key_exits_2(tmp_path, capsys):
    code = main(["run", "--config", str(_ini(tmp_path, "[run]\nbogus = 1\n"))])
    assert code == 2
    assert json.loads(capsys.readouterr().err)["stage"] == "config"


def test_subsonic_profile_exits_2_with_structured_error(tmp_path, capsys):
    code = main(["run", "--config", str(_ini(tmp_path, "[flow]\nkind = constant\nV = 1.0\n"))])
    assert code == 2
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "subsonic" and rec["stage"] == "validate_supersonic"


def test_sweep_needs_three_values(tmp_path):
    assert main(["sweep", "--sweep", "0.2", "0.1", "--out", str(tmp_path)] + SMALL) == 2


def test_dump_writes_field_file(tmp_path, capsys):
    assert main(["dump", "--eps", "0.1", "--out", str(tmp_path)] + SMALL) == 0
    path = capsys.readouterr().out.strip()
    lines = open(path).read().splitlines()
    assert lines[0].split(",")[:5] == ["x1", "x2", "u", "v", "rho"]
    assert len(lines) == 1 + 17 * 65


def test_verify_selected_suite(tmp_path, capsys):
    assert main(["verify", "--suites", "trivial-flow", "--out", str(tmp_path)] + SMALL) == 0
    assert "[trivial-flow] PASS" in capsys.readouterr().out
