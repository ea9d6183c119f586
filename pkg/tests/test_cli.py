import json

import numpy as np
import pytest

from phinterface.cli import main
from phinterface.config import ConfigError, load_config_file

GOOD = """
[domain]
a = -1.0
b = 1.0

[profile.minus]
kind = "constant-diagonal"
q11 = 1.0
q22 = 1.0

[profile.plus]
kind = "constant-diagonal"
q11 = 0.5
q22 = 2.0

[boundary]
wb = [[0.0, 0.7071067811865476, 0.7071067811865476, 0.0],
      [-0.7071067811865476, 0.7071067811865476, -0.7071067811865476, 0.7071067811865476]]

[interface]
l0 = 0.2
r = 1.0

[initial]
coordinates = "z"
minus1 = [0.2, -0.8, -1.0]
minus2 = [0.1, -0.4, -0.5]
plus1 = [-0.2, 1.2, -1.0]
plus2 = [-0.06, 0.36, -0.3]

[numerics]
n_minus = 16
n_plus = 16
dt = 1e-2
t_end = 0.2

[seeds]
seed = 0

[spectrum]
re_min = -4.0
re_max = 0.5
im_min = -6.0
im_max = 6.0
"""


@pytest.fixture
def good_config(tmp_path):
    p = tmp_path / "good.toml"
    p.write_text(GOOD)
    return p


def test_config_loads(good_config):
    cfg = load_config_file(good_config)
    assert cfg.bc.is_valid
    assert cfg.N_minus == 16 and cfg.interface.r == 1.0


@pytest.mark.parametrize("mangle,path_fragment", [
    (lambda s: s.replace("dt = 1e-2", "dt = -1.0"), "numerics.dt"),
    (lambda s: s.replace('q11 = 1.0\nq22 = 1.0', 'q22 = 1.0'), "profile.minus.q11"),
    (lambda s: s.replace("l0 = 0.2", "l0 = 3.0"), "interface.l0"),
    (lambda s: s.replace('kind = "constant-diagonal"', 'kind = "mystery"', 1),
     "profile.minus.kind"),
    (lambda s: s.replace("minus2 = [0.1, -0.4, -0.5]", 'minus2 = "oops"'),
     "initial.minus2"),
])
def test_validation_names_field_path(tmp_path, mangle, path_fragment):
    p = tmp_path / "bad.toml"
    p.write_text(mangle(GOOD))
    with pytest.raises(ConfigError) as err:
        load_config_file(p)
    assert path_fragment in str(err.value)


def test_analyze_exit_and_report(good_config, capsys):
    assert main(["analyze", str(good_config)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["classification"] == "contraction"
    assert np.allclose(report["sigma_form"], [[0.0, 0.0], [0.0, 2.0]], atol=1e-14)


def test_analyze_invalid_rank_exits_zero(tmp_path, capsys):
    p = tmp_path / "rank1.toml"
    p.write_text(GOOD.replace(
        "wb = [[0.0, 0.7071067811865476, 0.7071067811865476, 0.0],\n"
        "      [-0.7071067811865476, 0.7071067811865476, -0.7071067811865476, 0.7071067811865476]]",
        "wb = [[1.0, 1.0, 1.0, 1.0],\n      [1.0, 1.0, 1.0, 1.0]]"))
    assert main(["analyze", str(p)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["classification"] == "invalid_rank"


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "broken.toml"
    p.write_text("this is not toml [")
    assert main(["analyze", str(p)]) == 2


def test_missing_file_exit_code(capsys):
    assert main(["analyze", "/nonexistent/nowhere.toml"]) == 2


def test_simulate_writes_outputs(good_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(good_config), "--out", str(out)]) == 0
    summary_path = out / "good.summary.json"
    csv_path = out / "good.csv"
    assert summary_path.exists() and csv_path.exists()
    # round trip: the emitted summary equals the in-memory report
    printed = json.loads(capsys.readouterr().out)
    assert json.loads(summary_path.read_text()) == printed
    header = csv_path.read_text().splitlines()[0]
    assert header == ("t,H,fd1,fd2,ed1,ed2,fI,eI,balance_residual,"
                      "trace_a1,trace_a2,trace_b1,trace_b2")


def test_simulate_batch(good_config, tmp_path):
    other = tmp_path / "second.toml"
    other.write_text(GOOD)
    out = tmp_path / "batch"
    assert main(["simulate", str(good_config), str(other), "--out", str(out)]) == 0
    assert (out / "good.csv").exists() and (out / "second.csv").exists()


def test_spectrum_report(good_config, capsys):
    assert main(["spectrum", str(good_config)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["abscissa"] < 0
    assert all(set(e) == {"re", "im"} for e in report["eigenvalues"])


def test_verify_table_and_seed_pinning(good_config, capsys):
    assert main(["verify", str(good_config), "--suite", "duality",
                 "--seed", "7"]) == 0
    t1 = capsys.readouterr().out
    assert main(["verify", str(good_config), "--suite", "duality",
                 "--seed", "7"]) == 0
    t2 = capsys.readouterr().out
    assert t1 == t2 and "pass" in t1


def test_verify_broken_wb_names_failures(tmp_path, capsys):
    p = tmp_path / "rank1.toml"
    p.write_text(GOOD.replace(
        "wb = [[0.0, 0.7071067811865476, 0.7071067811865476, 0.0],\n"
        "      [-0.7071067811865476, 0.7071067811865476, -0.7071067811865476, 0.7071067811865476]]",
        "wb = [[1.0, 1.0, 1.0, 1.0],\n      [1.0, 1.0, 1.0, 1.0]]"))
    assert main(["verify", str(p), "--suite", "dissipativity"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" in out and "dissipativity.samples" in out


def test_verify_unknown_suite(good_config):
    assert main(["verify", str(good_config), "--suite", "nope"]) == 2


def test_presets_resolve(capsys):
    for preset in ("transmission-line", "unitary", "stable", "moving"):
        assert main(["analyze", preset]) == 0
        capsys.readouterr()


def test_moving_preset_bound_certificate(tmp_path, capsys):
    assert main(["simulate", "moving", "--out", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    cert = report["bound_certificate"]
    assert cert["held"] is True and cert["omega"] > 0


def test_zero_initial_empty_motion(tmp_path, capsys):
    p = tmp_path / "zero.toml"
    p.write_text(GOOD
                 .replace("minus1 = [0.2, -0.8, -1.0]", "minus1 = [0.0]")
                 .replace("minus2 = [0.1, -0.4, -0.5]", "minus2 = [0.0]")
                 .replace("plus1 = [-0.2, 1.2, -1.0]", "plus1 = [0.0]")
                 .replace("plus2 = [-0.06, 0.36, -0.3]", "plus2 = [0.0]"))
    assert main(["simulate", str(p), "--out", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["energy_initial"] == 0.0 and report["energy_final"] == 0.0
    body = (tmp_path / "zero.csv").read_text().splitlines()[1:]
    assert all(float(line.split(",")[1]) == 0.0 for line in body)
