import csv
import dataclasses
import subprocess
import sys

import numpy as np
import pytest

from steadybounds import bounds as bd
from steadybounds import cli
from steadybounds.trajectories import read_records


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


CAVITY = """schema = 1
seed = 5

[model]
kind = "parametric_cavity"
omega = 1.0
epsilon = 0.5
gamma = 0.2
dim = "auto"

[sweep]
epsilon = { start = 0.2, stop = 0.9, num = 3, scale = "epsilon_c" }
"""

THERMAL = """schema = 1

[model]
kind = "thermal_cavity"
gamma = 0.5
nbar = 1.0

[g2]
tau_max = 10.0
steps = 100
"""


def read_table(path):
    lines = path.read_text().splitlines()
    meta = {}
    for line in lines:
        if line.startswith("# ") and " = " in line:
            k, v = line[2:].split(" = ", 1)
            meta[k] = v
    rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    return meta, rows


def run(*args):
    return cli.main([*map(str, args), "--threads", "1"])


def test_certify_writes_report_and_succeeds(tmp_path):
    cfg = write(tmp_path, "c.toml", CAVITY)
    out = tmp_path / "c.csv"
    assert run("certify", "--config", cfg, "--out", out, "--no-timestamp") == 0
    meta, rows = read_table(out)
    assert meta["command"] == "certify" and meta["seed"] == "5"
    assert out.read_text().startswith("# steadybounds 0.1.0\n")
    assert len(rows) == 3
    assert list(rows[0])[:3] == ["epsilon", "tau_ss_bound", "tau_ss_measured"]
    assert all(r["tau_ss_satisfied"] == "1" and r["tau_c_satisfied"] == "1" for r in rows)
    assert float(rows[-1]["epsilon"]) == pytest.approx(0.9 * np.sqrt(1.01), rel=1e-15)


def test_corrupted_bound_exits_two(tmp_path, monkeypatch):
    real = cli.certify

    def flipped(*args, **kwargs):
        rep = real(*args, **kwargs)
        measured = -rep.tau_ss_measured
        return dataclasses.replace(rep, tau_ss_measured=measured,
                                   tau_ss_satisfied=bd.satisfied(measured, rep.tau_ss_bound))

    monkeypatch.setattr(cli, "certify", flipped)
    cfg = write(tmp_path, "c.toml", CAVITY)
    assert run("certify", "--config", cfg, "--out", tmp_path / "c.csv") == 2


def test_missing_file_exits_one(tmp_path, capsys):
    assert run("certify", "--config", tmp_path / "nope.toml") == 1
    assert "cannot read config" in capsys.readouterr().err


@pytest.mark.parametrize("text, line, fragment", [
    ("schema = 1\n[model]\nkind = \"parametric_cavity\"\nomega = = 1\n", 4, ""),
    ("schema = 2\n", 1, "unsupported schema"),
    ("schema = 1\n\n[model]\nkind = \"parametric_cavity\"\nomega = 1.0\nepsilon = 0.5\n"
     "gamma = 0.2\ncolour = 3\n", 8, "unknown key 'colour'"),
    ("schema = 1\n[model]\nkind = \"parametric_cavity\"\nomega = 1.0\nepsilon = 0.5\n"
     "gamma = \"fast\"\n", 6, "finite number"),
    (CAVITY.replace('epsilon = { start = 0.2, stop = 0.9, num = 3, scale = "epsilon_c" }',
                    "epsilon = [0.1, 0.3, 0.2]"), 12, "strictly monotone"),
    (CAVITY.replace('kind = "parametric_cavity"', 'kind = "laser"'), 5, "unknown model kind"),
])
def test_config_errors_report_lines(tmp_path, capsys, text, line, fragment):
    cfg = write(tmp_path, "bad.toml", text)
    assert run("certify", "--config", cfg, "--out", tmp_path / "o.csv") == 1
    err = capsys.readouterr().err
    assert f"line {line}:" in err and fragment in err


def test_output_is_reproducible(tmp_path):
    cfg = write(tmp_path, "c.toml", CAVITY)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert run("sweep", "--config", cfg, "--out", a, "--no-timestamp") == 0
    assert run("sweep", "--config", cfg, "--out", b, "--no-timestamp") == 0
    assert a.read_bytes() == b.read_bytes()
    assert run("sweep", "--config", cfg, "--out", c) == 0
    stamped = c.read_text().splitlines()
    assert any(line.startswith("# generated = ") for line in stamped)
    assert [x for x in stamped if not x.startswith("# generated")] == a.read_text().splitlines()


def test_sweep_seed_flag_overrides_config(tmp_path):
    cfg = write(tmp_path, "c.toml", CAVITY)
    out = tmp_path / "s.csv"
    assert run("sweep", "--config", cfg, "--out", out, "--seed", 99, "--no-timestamp") == 0
    assert read_table(out)[0]["seed"] == "99"


def test_g2_thermal_curve(tmp_path):
    cfg = write(tmp_path, "t.toml", THERMAL)
    out = tmp_path / "g2.csv"
    assert run("g2", "--config", cfg, "--out", out, "--no-timestamp") == 0
    meta, rows = read_table(out)
    tau = np.array([float(r["tau"]) for r in rows])
    g2 = np.array([float(r["g2"]) for r in rows])
    np.testing.assert_allclose(g2, 1 + np.exp(-0.5 * tau), atol=1e-9)
    assert float(meta["tau_c_resolvent"]) == pytest.approx(4.0, rel=1e-8)


def test_g2_cavity_methods_agree(tmp_path):
    text = CAVITY.split("[sweep]")[0] + "[g2]\nsteps = 4000\n"
    cfg = write(tmp_path, "g.toml", text)
    out = tmp_path / "g2.csv"
    assert run("g2", "--config", cfg, "--out", out, "--no-timestamp") == 0
    meta, _ = read_table(out)
    a, b = float(meta["tau_c_resolvent"]), float(meta["tau_c_quadrature"])
    assert abs(a - b) <= max(1e-6, float(meta["truncation_estimate"])) + 1e-6 * abs(a)


def test_g2_without_emission_exits_one(tmp_path, capsys):
    text = CAVITY.split("[sweep]")[0].replace("epsilon = 0.5", "epsilon = 0.0")
    cfg = write(tmp_path, "z.toml", text)
    assert run("g2", "--config", cfg, "--out", tmp_path / "z.csv") == 1
    assert "ZeroRate" in capsys.readouterr().err


def test_failed_point_exits_one(tmp_path):
    text = CAVITY.replace('epsilon = { start = 0.2, stop = 0.9, num = 3, scale = "epsilon_c" }',
                          "epsilon = [0.0, 0.5]")
    cfg = write(tmp_path, "f.toml", text)
    out = tmp_path / "f.csv"
    assert run("certify", "--config", cfg, "--out", out) == 1
    _, rows = read_table(out)
    # the vacuum has zero photon-number variance, caught before the rate check
    assert rows[0]["error"].startswith(("DegenerateObservable", "ZeroRate"))
    assert rows[1]["error"] == ""


def test_trajectories_command(tmp_path):
    text = """schema = 1
seed = 12

[model]
kind = "ising"
n = 1
omega = 0.0
hx = [0.5]
J = [[0.0]]
gamma = 0.2

[trajectories]
n = 4
duration = 3000.0
window = 1.0
"""
    cfg = write(tmp_path, "q.toml", text)
    out = tmp_path / "clicks.csv"
    assert run("trajectories", "--config", cfg, "--out", out, "--no-timestamp") == 0
    recs = read_records(out)
    assert [r.index for r in recs] == [0, 1, 2, 3] and all(r.seed == 12 for r in recs)
    assert "# mean_rate = " in out.read_text()


def test_ising_map_and_scan(tmp_path):
    text = """schema = 1

[model]
kind = "infinite_range_ising"
n = 2
omega = 0.0
hx = 0.5
Jbar = 1.0
gamma = 0.1

[ising_map]
omega = [-0.2, 0.0, 0.2]
hx = [0.3, 0.6]
n_scan = [1, 2]
scan_omega = { start = -0.3, stop = 0.3, num = 7 }
"""
    cfg = write(tmp_path, "i.toml", text)
    out = tmp_path / "map.csv"
    assert run("ising-map", "--config", cfg, "--out", out, "--no-timestamp") == 0
    _, rows = read_table(out)
    assert len(rows) == 6
    assert list(rows[0])[:7] == ["omega", "hx", "tau_c_bound", "tau_ss_bound", "d_m_domega",
                                 "m_ss", "var_m"]
    _, scan = read_table(tmp_path / "map_nscan.csv")
    assert [r["n"] for r in scan] == ["1", "2"]


def test_ising_map_needs_ising_model(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", CAVITY)
    assert run("ising-map", "--config", cfg) == 1
    assert "infinite_range_ising" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "t.toml", THERMAL)
    proc = subprocess.run([sys.executable, "-m", "steadybounds.cli", "g2", "--config", str(cfg),
                           "--out", "-", "--no-timestamp", "--threads", "1"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# steadybounds 0.1.0\n") and "tau,g2" in proc.stdout
