import subprocess
import sys

import pytest
import yaml

from cmmexplore.cli import EXIT_CONFIG, EXIT_OK, main
from cmmexplore.config import (PRESETS, ExperimentConfig, apply_overrides, dump_config, from_dict,
                               load_config, preset_text)
from cmmexplore.scene import ConfigError


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_round_trip(name):
    cfg = load_config(name)
    cfg.validate()
    again = from_dict(yaml.safe_load(dump_config(cfg)))
    assert again.to_dict() == cfg.to_dict()
    assert cfg.name == name
    assert preset_text(name).startswith("#")


def test_unknown_field_is_named(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("budget: 10\ncmm: {alpha: 0.2, alhpa: 0.3}\n")
    with pytest.raises(ConfigError, match="cmm.alhpa"):
        load_config(path)


@pytest.mark.parametrize("text, field", [
    ("budget: 0\n", "budget"),
    ("replications: 0\n", "replications"),
    ("cmm: {alpha: 0}\n", "alpha"),
    ("budget: ten\n", "budget"),
    ("explorer: {mode: psychic}\n", "mode"),
])
def test_invalid_values(tmp_path, text, field):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError, match=field):
        load_config(path).validate()


def test_overrides():
    cfg = apply_overrides(load_config("bricks-on-table"), {"cmm.alpha": 0.5, "budget": 7, "workers": None})
    assert cfg.cmm.alpha == 0.5 and cfg.budget == 7
    assert cfg.workers == 1
    cfg.disable_split_merge = True
    assert cfg.effective_cmm().split_merge is False
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"cmm.nope": 1})


def test_default_config_is_valid():
    ExperimentConfig().validate()


def test_validate_config_exit_codes(tmp_path, capsys):
    assert main(["validate-config", "white-bricks"]) == EXIT_OK
    bad = tmp_path / "bad.yaml"
    bad.write_text("scene: {table: {extent: [0.6, 0.6], colour: [1, 1, 1]}}\n")
    assert main(["validate-config", str(bad)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "scene.table.colour" in err
    assert main(["validate-config", "balls-on-table", "--alpha", "1.5"]) == EXIT_CONFIG


def test_print_resolved_config(capsys):
    assert main(["validate-config", "balls-on-table", "--budget", "12", "--print"]) == EXIT_OK
    cfg = from_dict(yaml.safe_load(capsys.readouterr().out))
    assert cfg.budget == 12


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "cmmexplore.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("run", "sweep-alpha", "export-map", "validate-config"):
        assert cmd in out.stdout
