import json
import math
import os

import numpy as np
import pytest

from spincavity import cli
from spincavity._io import read_csv, sha256_file
from spincavity.cli import ConfigError, main, parse_quantity
from spincavity.pulses import BumpPulse

CONFIGS = os.path.join(os.path.dirname(cli.__file__), "data", "configs")

BASE = """\
[system]
mode = dimensionless
kappa = 4 dimensionless
noise_dX = 0.5 dimensionless

[ensemble]
N_total = 1
distribution = uniform
offset_lo = -5 dimensionless
offset_hi = 5 dimensionless
g0 = 1 dimensionless
n_bins = 11
polarization = full

[pulse]
family = {family}
duration = 1 dimensionless
angle = 90 deg

[simulate]
t_end = 2 dimensionless
"""


def _columns(path):
    header, rows = read_csv(path)
    return dict(zip(header, np.array(rows).T))


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("text,kind,mode,value", [
    ("1 Hz", "rate", "SI", 2 * math.pi),
    ("1.9 MHz", "rate", "SI", 2 * math.pi * 1.9e6),
    ("9.8e5 rad_s", "rate", "SI", 9.8e5),
    ("10 Hz", "per_second", "SI", 10.0),
    ("80 us", "time", "SI", 8e-5),
    ("1.7 ms", "time", "SI", 1.7e-3),
    ("4 dimensionless", "rate", "dimensionless", 4.0),
    ("90 deg", "angle", "SI", math.pi / 2),
    ("0.5 pi", "angle", "dimensionless", math.pi / 2),
])
def test_parse_quantity(text, kind, mode, value):
    assert parse_quantity(text, kind, mode, "x") == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text,kind,mode", [
    ("4", "rate", "SI"), ("4 us", "rate", "SI"), ("1 Hz", "rate", "dimensionless"),
    ("1 kHz", "per_second", "SI"), ("nan Hz", "rate", "SI"), ("1 2 Hz", "rate", "SI"),
    ("a Hz", "rate", "SI")])
def test_parse_quantity_rejects(text, kind, mode):
    with pytest.raises(ConfigError, match="^field"):
        parse_quantity(text, kind, mode, "field")


def test_list_quantity():
    assert parse_quantity("1 2 4 us", "time", "SI", "d", many=True) == pytest.approx(
        [1e-6, 2e-6, 4e-6])


def test_bare_number_is_config_error(tmp_path, capsys):
    text = BASE.format(family="bump").replace("kappa = 4 dimensionless", "kappa = 4")
    assert main(["simulate", "--config", _cfg(tmp_path, text), "--out",
                 str(tmp_path / "o")]) == 2
    assert "system.kappa" in capsys.readouterr().err


@pytest.mark.parametrize("edit", [("[simulate]", "[simulate]\nspeed = 3"),
                                  ("[simulate]", "[bogus]\nx = 1\n[simulate]")])
def test_unknown_keys_and_sections(tmp_path, capsys, edit):
    text = BASE.format(family="bump").replace(*edit)
    assert main(["simulate", "--config", _cfg(tmp_path, text), "--out",
                 str(tmp_path / "o")]) == 2
    assert "unknown" in capsys.readouterr().err


def test_missing_config_and_bad_step(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    cfg = _cfg(tmp_path, BASE.format(family="bump"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--step", "0.01"]) == 2
    assert "--step" in capsys.readouterr().err


def test_zero_drive_keeps_state_constant(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _cfg(tmp_path, BASE.format(family="none")),
                 "--out", str(out)]) == 0
    cols = _columns(str(out / "trajectory.csv"))
    for name in ("X", "Y", "Sbar_x", "Sbar_y"):
        assert np.all(np.asarray(cols[name]) == 0.0)
    assert np.all(np.asarray(cols["Sbar_z"]) == -0.5)


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, BASE.format(family="bump"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--step", "5 dimensionless"]) == 3
    assert "numerical failure in spincavity." in capsys.readouterr().err


def _run_twice(tmp_path, args):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(args + ["--out", str(out)]) == 0
        outs.append(out)
    return outs


def _manifest_matches_disk(out):
    doc = json.loads((out / "manifest.json").read_text())
    listed = {e["path"]: e for e in doc["files"]}
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
    assert on_disk - {"manifest.json"} == set(listed)
    for rel, e in listed.items():
        assert e["sha256"] == sha256_file(str(out / rel))
        assert e["bytes"] == (out / rel).stat().st_size
    return doc


@pytest.mark.parametrize("command", ["simulate", "echo", "deconvolve"])
def test_reproducible_and_manifest_complete(tmp_path, command):
    text = BASE.format(family="bump") + "\n[sequence]\ntau = 3 dimensionless\n" \
        "window = 2 dimensionless\n"
    args = [command, "--config", _cfg(tmp_path, text), "--seed", "5"]
    a, b = _run_twice(tmp_path, args)
    doc = _manifest_matches_disk(a)
    assert doc["seed"] == 5
    for e in doc["files"]:
        assert (a / e["path"]).read_bytes() == (b / e["path"]).read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_optimize_is_reproducible(tmp_path):
    text = BASE.format(family="bump") + """
[optimize]
target = pi/2
delta_lo = -5 dimensionless
delta_hi = 5 dimensionless
delta_n = 5
budget = 40
restarts = 2
n_harmonics = 2
p = 2
n_steps = 200
"""
    a, b = _run_twice(tmp_path, ["optimize", "--config", _cfg(tmp_path, text), "--seed", "11"])
    _manifest_matches_disk(a)
    for f in ("pulse.csv", "pulse.json", "log.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_deconvolve_matches_closed_form(tmp_path):
    out = tmp_path / "o"
    assert main(["deconvolve", "--config", _cfg(tmp_path, BASE.format(family="bump")),
                 "--out", str(out), "--step", "0.001 dimensionless"]) == 0
    cols = _columns(str(out / "drive.csv"))
    t = np.asarray(cols["t"])
    wx, wy = BumpPulse(math.pi / 2, 2.0).omega(t, 4.0)
    scale = np.max(np.abs(wx))
    assert np.max(np.abs(np.asarray(cols["omega_X"]) - wx)) / scale < 1e-6
    assert np.max(np.abs(np.asarray(cols["omega_Y"]) - wy)) / scale < 1e-6


def test_fixtures_verify(tmp_path, capsys):
    assert main(["fixtures", "verify", "--out", str(tmp_path / "f")]) == 0
    printed = capsys.readouterr().out
    assert printed.count("ok") == 4
    _manifest_matches_disk(tmp_path / "f")


@pytest.mark.parametrize("name", ["low_coop.cfg", "high_coop.cfg", "dimensionless.cfg"])
def test_shipped_configs_parse(name):
    for command in ("echo", "cpmg", "simulate"):
        try:
            cfg = cli.load_config(os.path.join(CONFIGS, name), command)
        except ConfigError as e:  # simulate needs its own section
            assert command == "simulate" and "t_end" in str(e)
            continue
        assert cfg.params.kappa > 0
