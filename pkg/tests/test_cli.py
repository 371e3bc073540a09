import json

import pytest

from qlsearch import cli
from qlsearch.report import embedded_digest, read_csv

FAST = {"physics": {"fock_cutoff": 8}}


@pytest.fixture
def fast_config(tmp_path):
    f = tmp_path / "fast.json"
    f.write_text(json.dumps(FAST))
    return str(f)


def run(*args):
    return cli.main(list(args))


def test_lineshape_command(tmp_path, fast_config):
    out = tmp_path / "ls.json"
    assert run("--config", fast_config, "lineshape", "--time", "10", "--grid", "-3:3:1",
               "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert len(doc["table"]["signal"]) == 7
    assert doc["config_digest"] and doc["fwhm_Omega"] > 0


def test_test_command_exact_and_mc(tmp_path, fast_config):
    out = tmp_path / "t.json"
    assert run("--config", fast_config, "test", "--L", "3", "--M", "4", "--time", "20", "--step", "2",
               "--phi", "0", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert set(doc["per_position"]) == {"aligned", "shifted"}
    assert doc["errors"]["miss_rate"] == max(v["miss_rate"] for v in doc["per_position"].values())
    out_mc = tmp_path / "t_mc.json"
    assert run("--config", fast_config, "--seed", "2", "test", "--L", "3", "--M", "4", "--time", "20",
               "--step", "2", "--mode", "mc", "--samples", "4000", "--out", str(out_mc)) == 0
    mc = json.loads(out_mc.read_text())
    assert abs(mc["errors"]["false_alarm"] - doc["errors"]["false_alarm"]) < 0.05


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"physics": {"rabii": 1}}))
    assert run("--config", str(bad), "lineshape") == 2
    assert run("test", "--spam", "0.7") == 2
    assert run("lineshape", "--grid", "1:2") == 2
    assert run("lineshape", "--squeezing-db", "8", "--squeezing-r", "0.5") == 2
    assert run("--config", str(tmp_path / "missing.json"), "lineshape") == 2
    assert run("test", "--L", "notanint") == 2


def test_computation_error_exit_code(tmp_path, fast_config, monkeypatch):
    from qlsearch.errors import IntegrationFailure

    def boom(*a, **k):
        raise IntegrationFailure("step control failed")

    monkeypatch.setattr(cli.LineshapeCache, "tables", boom)
    assert run("--config", fast_config, "lineshape", "--time", "1", "--grid", "-1:1:1",
               "--out", str(tmp_path / "x.json")) == 3


def test_optimize_and_infeasible_exit(tmp_path, fast_config):
    out = tmp_path / "opt"
    assert run("--config", fast_config, "optimize", "--grid-spec", "M=4:8:4;t=20:40:20;s=1:2:1",
               "--eps1", "0.2", "--eps2", "0.2", "--out", str(out)) == 0
    rows = read_csv(out / "optimum.csv")
    assert rows[0]["feasible"] == "True"
    maps = json.loads((out / "maps.json").read_text())
    assert len(maps["maps"]["0.0"]) == 2 * 2 * 2
    assert embedded_digest(out / "optimum.csv") == maps["config_digest"]
    assert run("--config", fast_config, "optimize", "--grid-spec", "M=1;t=5;s=4", "--eps1", "0.001",
               "--eps2", "0.001", "--no-maps", "--out", str(tmp_path / "none")) == 4


def test_speed_map_and_sweep(tmp_path, fast_config):
    out = tmp_path / "map.csv"
    assert run("--config", fast_config, "speed-map", "--M", "4", "--grid-spec", "t=10:20:10;s=1:3:1",
               "--out", str(out)) == 0
    rows = read_csv(out)
    assert len(rows) == 6 and {"fwhm_Omega", "feasible", "v_Hz_per_s"} <= set(rows[0])
    sweep = tmp_path / "sweep.csv"
    assert run("--config", fast_config, "sweep-squeezing", "--curves", "1:0,1:0.1",
               "--squeezing-db-list", "0,2", "--grid-spec", "M=2:10:4;t=20;s=1:2:1",
               "--eps1", "0.2", "--eps2", "0.2", "--out", str(sweep)) == 0
    assert len(read_csv(sweep)) == 4


def test_grid_spec_parsing():
    assert cli.parse_grid_spec("M=1:3;t=5:15:5;s=0.5,1") == {
        "shots": [1, 2, 3], "times": [5.0, 10.0, 15.0], "steps": [0.5, 1.0]}
    with pytest.raises(Exception):
        cli.parse_grid_spec("x=1:2")


def test_reproduce_fig3_is_deterministic_and_verifiable(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("--config", fast_config, "--seed", "7", "reproduce", "fig3", "--coarse",
                   "--out", str(d)) == 0
    names = json.loads((a / "manifest.json").read_text())["files"]
    assert set(names) == {"fig3_exact.csv", "fig3_mc.csv", "fig3_summary.json"}
    for name in list(names) + ["manifest.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert json.loads((a / "runtimes.json").read_text())["figure"] == "fig3"
    assert run("--config", fast_config, "--seed", "7", "reproduce", "fig3", "--verify", "--out", str(a)) == 0
    # other seed -> other digest
    assert run("--config", fast_config, "--seed", "8", "reproduce", "fig3", "--verify", "--out", str(a)) == 3
    with (a / "fig3_mc.csv").open("a") as fh:
        fh.write("tampered\n")
    assert run("--config", fast_config, "--seed", "7", "reproduce", "fig3", "--verify", "--out", str(a)) == 3


def test_stdout_carries_logs_only(tmp_path, fast_config, capsys):
    run("--config", fast_config, "lineshape", "--time", "5", "--grid", "-1:1:1", "--out", str(tmp_path / "l.json"))
    out = capsys.readouterr().out
    assert "INFO" in out and "signal" not in out
