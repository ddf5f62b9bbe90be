import subprocess
import sys

import numpy as np
import pytest

from scrtf import cli
from scrtf.config import dump_config, load_config, parse_config
from scrtf.errors import ConfigError

SHORT = """
[experiment]
estimators = sc1,sc2,gevd,model,oracle
bias_frame_step = 50

[scene]
duration = 4.0
seed = 5
"""


def test_defaults_round_trip():
    cfg = parse_config(dump_config())
    assert dump_config(cfg) == dump_config()
    assert cfg.scene.duration == 30.0 and cfg.scene.geometry.ma == 4 and cfg.scene.geometry.me == 2
    assert cfg.estimators == ("sc1", "sc2", "gevd", "model")


def test_partial_config_and_overrides():
    cfg = parse_config(SHORT, seed=9, estimators="gevd")
    assert cfg.scene.duration == 4.0
    assert cfg.seed == 9
    assert cfg.estimators == ("gevd",)
    # default walk is stretched to the new duration
    assert cfg.scene.trajectory.times[-1] == 4.0
    assert parse_config(dump_config(cfg)).scene.seed == 9


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[scene]\nbogus = 1\n",
    "[scene]\nduration = soon\n",
    "[scene]\nduration = -1\n",
    "[experiment]\nestimators = sc7\n",
    "[experiment]\ncovariance_mode = psychic\n",
    "[stft]\nhop = 100\n",
    "[scene.trajectory]\ntimes = 0, 1\n",
    "not an ini file",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["--dump-defaults"]) == 0
    assert "[scene.geometry]" in capsys.readouterr().out
    assert cli.main([]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[scene]\nbogus = 1\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 2
    assert cli.main(["run", "--scene", str(tmp_path / "missing")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_verify_command(capsys):
    assert cli.main(["verify", "--instances", "60"]) == 0
    out = capsys.readouterr().out
    assert "all identities hold" in out
    assert "FAIL" not in out


def test_run_report_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "short.ini"
    cfg.write_text(SHORT)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    for name in ("snr.csv", "weights.csv", "bias.csv", "fallbacks.csv", "enhanced_gevd.wav",
                 "scene/mixture.wav"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    capsys.readouterr()
    assert cli.main(["report", "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert "gevd" in out and "re_alpha1_model" in out and "bias sc1" in out


def test_simulate_then_run_from_scene(tmp_path):
    cfg = tmp_path / "short.ini"
    cfg.write_text(SHORT)
    scene_dir = tmp_path / "scene"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(scene_dir)]) == 0
    assert (scene_dir / "mixture.wav").exists()
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg), "--scene", str(scene_dir), "--out", str(out),
                     "--estimators", "gevd,model"]) == 0
    assert (out / "snr.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "scrtf", "--dump-defaults"], capture_output=True,
                         text=True, check=True)
    assert res.stdout.startswith("[experiment]")
    res = subprocess.run([sys.executable, "-m", "scrtf"], capture_output=True, text=True)
    assert res.returncode == 2
