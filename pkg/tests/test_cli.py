import json
import os

import numpy as np
import pytest

from festina.cli import run
from festina.config import (SHIPPED, ConfigError, config_hash, dumps_config, loads_config,
                            parse_config, shipped_config)

SMALL = """
[run]
seed = 3

[trap]
dimension = 3
eta = 2.0
n_shells = 8

[emission]
n_theta = 4
n_phi = 4

[collisions]
strength = 1e-3

[initial]
kind = "thermal"
N = 20
mean_energy = 3.0

[simulate]
cycles_max = 5
n_seeds = 2

[[pulse]]
s = -4.0
amplitudes = [1.0, 1.0, 1.0]
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_roundtrip(name):
    cfg = parse_config(shipped_config(name))
    again = loads_config(dumps_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


@pytest.mark.parametrize("text, key, line", [
    ("[trap]\neta = 2.0\nbogus = 1\n", "trap.bogus", 3),
    ("[trap]\neta = \"two\"\n", "trap.eta", 2),
    ("[trap]\n\neta = -1.0\n", "trap.eta", 3),
    ("[run]\nformat = \"xml\"\n", "run.format", 2),
    ("[trap]\neta = 2.0\neta = 3.0\n", "eta", 3),
    ("[[pulse]]\ns = 1.0\nrabi = 0.0\n", "pulse[0]", None),
    ("s = 1\n[[pulse]]\ns = 0.0\n[[pulse]]\namplitudes = [1.0, 2.0]\n", "s", 1),
    ("[[pulse]]\ns = 0.0\n[[pulse]]\namplitudes = [1.0, 2.0]\n", "pulse[1].amplitudes", 4),
])
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as e:
        loads_config(text)
    assert e.value.key == key
    if line is not None:
        assert e.value.line == line


def test_syntax_error():
    with pytest.raises(ConfigError):
        loads_config("[trap\n")


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[trap]\nwhat = 1\n")
    assert run(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "trap.what" in capsys.readouterr().err


def test_module_failure_exit_code(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("[bdg]\nn_basis = 4\nn_modes = 8\n")
    assert run(["bdg", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "bdg failed" in capsys.readouterr().err


def test_list_values_validated():
    with pytest.raises(ConfigError) as e:
        loads_config("[thermo]\nN = [100.0, -5.0]\n")
    assert e.value.key == "thermo.N" and e.value.line == 2


def test_estimate_json(tmp_path, capsys):
    assert run(["estimate", "--config", "table1", "--out", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "table1.json").read_text())
    assert body["_header"]["seed"] == 0
    assert "config_hash" in body["_header"]
    assert "eta" in capsys.readouterr().out


def test_simulate_outputs_and_header(small, tmp_path):
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(small), "--out", str(out)]) == 0
    files = sorted(os.listdir(out))
    assert files == ["ensemble_mean.csv", "trajectory_seed3.csv", "trajectory_seed4.csv"]
    lines = (out / "trajectory_seed3.csv").read_text().splitlines()
    assert lines[0].startswith("# festina ")
    assert lines[1].startswith("# config_hash: ")
    assert lines[2] == "# seed: 3"
    data = np.loadtxt(out / "trajectory_seed3.csv", delimiter=",", skiprows=4)
    assert np.all(data[:, 4:].sum(1) == 20)
    assert not any(f.startswith(".") for f in files)


def test_zero_rate_pulse_gives_flat_trajectory(tmp_path):
    p = tmp_path / "z.toml"
    p.write_text(SMALL.replace("s = -4.0", "s = -4.0\nrabi = 0.0\nduration = 10.0")
                 .replace("strength = 1e-3", "strength = 0.0"))
    assert run(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 0
    d = np.loadtxt(tmp_path / "trajectory_seed3.csv", delimiter=",", skiprows=4)
    assert np.all(d[:, 3:] == d[0, 3:])


def test_seed_reproducible_bytes(small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for o in (a, b):
        assert run(["simulate", "--config", str(small), "--out", str(o), "--seed", "11"]) == 0
    for f in os.listdir(a):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    c = tmp_path / "c"
    run(["simulate", "--config", str(small), "--out", str(c), "--seed", "12"])
    assert (c / "trajectory_seed12.csv").read_bytes() != (a / "trajectory_seed12.csv").read_bytes()


def test_fc_and_dump_config(tmp_path):
    p = tmp_path / "f.toml"
    p.write_text("[fc]\nkappa = 0.5\nn_max = 6\n")
    assert run(["fc", "--config", str(p), "--out", str(tmp_path), "--dump-config",
                "--format", "json"]) == 0
    cfg = parse_config(tmp_path / "config.resolved.toml")
    assert cfg["fc"]["kappa"] == 0.5
    body = json.loads(next(tmp_path.glob("fc*.json")).read_text())
    assert len(body["rows"]) == 49


def test_bdg_command(tmp_path):
    p = tmp_path / "b.toml"
    p.write_text("[bdg]\nN0 = 50.0\na = [0.0, 0.01]\nn_basis = 20\nn_modes = 4\n")
    assert run(["bdg", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bdg_modes.csv").exists()


TINY = """
[trap]
eta = 2.0
n_shells = 10

[emission]
n_theta = 4
n_phi = 4

[initial]
kind = "bed"
N = 30
mean_energy = 2.0

[thermo]
N = [200.0]
n_grid = 6
flow_N = 200.0
horizon = 100.0
energy = "shell"

[thermalize]
duration = 0.2
n_traj = 3

[[pulse]]
s = -4.0
amplitudes = [1.0, 1.0, 1.0]
"""


def test_rates_thermo_thermalize(tmp_path):
    p = tmp_path / "t.toml"
    p.write_text(TINY)
    for cmd in ("rates", "thermo", "thermalize"):
        assert run([cmd, "--config", str(p), "--out", str(tmp_path)]) == 0
    r = np.loadtxt(tmp_path / "rates.csv", delimiter=",", skiprows=4)
    assert r.shape == (100, 4) and np.all(r[:, 3] >= 0)
    st_ = np.loadtxt(tmp_path / "stationary_T.csv", delimiter=",", skiprows=4, ndmin=2)
    assert st_.shape == (1, 6)
    th = np.loadtxt(tmp_path / "thermalize.csv", delimiter=",", skiprows=4)
    assert th[:, 1].sum() == pytest.approx(30) and th[:, 2].sum() == pytest.approx(30)


def test_commands_needing_pulses(tmp_path, capsys):
    p = tmp_path / "np.toml"
    p.write_text("[trap]\nn_shells = 6\n")
    assert run(["rates", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "[[pulse]]" in capsys.readouterr().err
