import json
import subprocess
import sys

import pytest

from torusqe import cli
from torusqe.observables import Observable

OBS = json.dumps(Observable.cosine((6, 8)).to_json())


def run(tmp_path, *args, name=None):
    argv = list(args) + ["--out", str(tmp_path)]
    if name:
        argv += ["--name", name]
    return cli.main(argv)


def load(tmp_path, name):
    return json.loads((tmp_path / f"{name}.json").read_text())


def test_shell(tmp_path, capsys):
    assert run(tmp_path, "shell", "--d", "4", "--E", "2") == 0
    assert "r=24" in capsys.readouterr().out
    doc = load(tmp_path, "shell")
    assert doc["summary"]["r"] == 24 and doc["schema_version"] == cli.SCHEMA_VERSION
    lines = (tmp_path / "shell.csv").read_text().splitlines()
    assert lines[0] == "k1,k2,k3,k4" and len(lines) == 25
    dat = (tmp_path / "shell.dat").read_text().splitlines()
    assert dat[0].startswith("#") and any("gnuplot" in l for l in dat[:3])


def test_shell_range(tmp_path):
    assert run(tmp_path, "shell", "--d", "2", "--emax", "25") == 0
    assert load(tmp_path, "shell")["summary"]["lattice_count"] == 81


def test_variance_example(tmp_path, capsys):
    obs = tmp_path / "obs.json"
    obs.write_text(OBS)
    assert run(tmp_path, "variance", "--d", "2", "--lambda", "20", "--basis", "haar:seed=7:count=3",
               "--obs", str(obs)) == 0
    doc = load(tmp_path, "variance")
    assert len(doc["summary"]["windows"]) == 3
    for w in doc["summary"]["windows"]:
        assert w["V2"] <= w["prop_rhs"] + 1e-9 and "maintheo_ratio" in w
    header = (tmp_path / "variance.csv").read_text().splitlines()[0]
    assert header == "lambda,basis,E,r,s2,moment_rhs"


def test_variance_modes(tmp_path):
    assert run(tmp_path, "variance", "--mode", "short", "--lambda", "10:20:5", "--obs", "dict:rand_r3",
               "--basis", "paired") == 0
    doc = load(tmp_path, "variance")
    assert [w["lambda"] for w in doc["summary"]["windows"]] == [10, 15, 20]
    assert "max_short_scaled_ratio" in doc["summary"]
    assert run(tmp_path, "variance", "--mode", "eigenspace", "--E", "17", "--obs", "dict:cos_2ed",
               "--basis", "reflected") == 0
    assert load(tmp_path, "variance")["summary"]["max_s2_over_r"] == pytest.approx(0.5)


def test_zygmund(tmp_path, capsys):
    assert run(tmp_path, "zygmund", "--d", "2", "--emax", "500", "--samples", "200") == 0
    s = load(tmp_path, "zygmund")["summary"]
    assert s["max_l4"] <= 3**0.25 + 1e-9
    assert s["phi_q_l4"] == pytest.approx(1.5**0.25, abs=1e-12)


def test_other_subcommands(tmp_path):
    assert run(tmp_path, "paircount", "--d", "2", "--emax", "300") == 0
    assert load(tmp_path, "paircount")["summary"]["max_pair_count"] == 2
    assert run(tmp_path, "paircount", "--d", "2", "--E", "25", "--n", "6,8") == 0
    assert load(tmp_path, "paircount")["summary"]["max_pair_count"] == 1
    assert run(tmp_path, "separation", "--N", "100") == 0
    assert run(tmp_path, "iwaniec", "--limit", "20") == 0
    assert load(tmp_path, "iwaniec")["summary"]["n_values"][:3] == [1, 2, 3]
    assert run(tmp_path, "decay-fit", "--measure", "sphere:r=1", "--emax", "400") == 0
    assert abs(load(tmp_path, "decay-fit")["summary"]["alpha"] - 2) < 0.15
    assert run(tmp_path, "restriction", "--measure", "circle:r=1", "--E", "25", "--basis", "paired") == 0
    assert run(tmp_path, "restriction", "--measure", "circle:r=1", "--emax", "50") == 0
    assert "br" in load(tmp_path, "restriction")["summary"]
    assert run(tmp_path, "period-decay", "--measure", "ellipse:a=1:b=0.5", "--emax", "50") == 0
    assert run(tmp_path, "measure-variance", "--measure", "circle:r=1", "--mu-mode", "probability",
               "--lambda", "6", "--obs", "dict:cos_e1") == 0
    assert load(tmp_path, "measure-variance")["summary"]["reports"][0]["alpha_case"] == "alpha=d-1"


def test_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "variance", "--lambda", "5") == 1  # missing --obs
    assert run(tmp_path, "shell", "--d", "2", "--E", "x") == 1
    assert run(tmp_path, "nosuch") == 1
    assert run(tmp_path, "shell", "--d", "12", "--E", "4") == 1
    assert run(tmp_path, "variance", "--lambda", "5", "--obs", "dict:cos_e1", "--basis", "haar:seed=x") == 1
    assert run(tmp_path, "period-decay", "--measure", "line:h=0", "--emax", "20") == 1
    assert run(tmp_path, "zygmund", "--d", "3") == 1
    assert cli.main([]) == 1


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["shell", "--help"])
    assert e.value.code == 0
    assert "default" in capsys.readouterr().out


def test_violation_exit_code(tmp_path, monkeypatch):
    import torusqe.variance as var

    monkeypatch.setattr(var, "prop_rhs", lambda a, w: -1.0)
    assert run(tmp_path, "variance", "--lambda", "5", "--obs", OBS, "--basis", "haar:1") == 2


def test_config_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 4, "E": 3}))
    assert run(tmp_path, "shell", "--config", str(cfg)) == 0
    assert load(tmp_path, "shell")["summary"]["r"] == 32
    assert run(tmp_path, "shell", "--config", str(cfg), "--E", "2") == 0
    assert load(tmp_path, "shell")["summary"]["r"] == 24
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "shell", "--config", str(cfg)) == 1
    cfg.write_text(json.dumps({"lambda": 8, "obs": "dict:cos_e1"}))
    assert run(tmp_path, "variance", "--config", str(cfg)) == 0


def test_thread_resolution(monkeypatch):
    monkeypatch.setenv("TORUSQE_THREADS", "3")
    assert cli.thread_count({"threads": 5}, None) == 3
    assert cli.thread_count({}, 2) == 2
    monkeypatch.delenv("TORUSQE_THREADS")
    assert cli.thread_count({"threads": 5}, None) == 5
    assert cli.thread_count({}, None) >= 1
    monkeypatch.setenv("TORUSQE_THREADS", "zero")
    with pytest.raises(cli.UsageError):
        cli.thread_count({}, None)


@pytest.mark.parametrize("args", [
    ["variance", "--lambda", "12", "--obs", "dict:rand_r6", "--basis", "haar:seed=1:count=2"],
    ["zygmund", "--emax", "200", "--samples", "40"],
    ["restriction", "--measure", "circle:r=1", "--emax", "80"],
])
def test_byte_identical_across_threads(tmp_path, monkeypatch, args):
    outs = []
    for t in ("1", "4"):
        monkeypatch.setenv("TORUSQE_THREADS", t)
        d = tmp_path / t
        assert cli.main(args + ["--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outs[0] == outs[1]


def test_reference_page(capsys):
    assert cli.main(["reference"]) == 0
    text = capsys.readouterr().out
    for name in cli.COMMANDS:
        assert f"## {name}" in text


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "torusqe", "shell", "--d", "2", "--E", "25", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "r=12" in res.stdout
