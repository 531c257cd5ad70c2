import json
import os

import pytest

from sheepdog.cli import main

ONE = """\
[scenario]
horizon = {horizon}

[initial]
sheep = [[3.0, 0.5]]
dogs = [[2.0, -1.0]]

[certificate]
M1 = 5.0
M2 = 5.0
M3 = 1.0
"""


@pytest.fixture
def one(tmp_path):
    path = tmp_path / "one.toml"
    path.write_text(ONE.format(horizon=2.0))
    return path


def test_simulate_writes_full_trajectory(one, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", str(one), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 201
    assert lines[0].startswith("t,sheep0_x,sheep0_y,dog0_x,dog0_y,u0_x,u0_y,h0_0,qp_status,breach")
    assert "success=true" in capsys.readouterr().out


def test_simulate_jsonl(one, tmp_path):
    out = tmp_path / "traj.jsonl"
    assert main(["simulate", str(one), "--out", str(out), "--format", "jsonl"]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(recs) == 201 and recs[0]["t"] == 0.0 and "breach" in recs[0]


def test_bad_dt_exits_one_and_names_key(one, tmp_path, capsys):
    assert main(["simulate", str(one), "--set", "scenario.dt=0", "--out", str(tmp_path / "x.csv")]) == 1
    err = capsys.readouterr().err
    assert "scenario.dt" in err
    assert not (tmp_path / "x.csv").exists()


def test_unknown_override_exits_one(one, capsys):
    assert main(["simulate", str(one), "--set", "scenario.speed=3"]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_breach_exits_two(tmp_path):
    path = tmp_path / "bare.toml"
    path.write_text("[scenario]\nhorizon = 6.0\nn = 2\nm = 0\n")
    assert main(["simulate", str(path), "--out", str(tmp_path / "t.csv")]) == 2
    assert (tmp_path / "t.csv").exists()


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_certify_and_validate(one, capsys):
    assert main(["certify", str(one)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("verdict: PASS") and "b^H lower bound" in text
    assert main(["validate-gains", str(one)]) == 0
    assert main(["validate-gains", str(one), "--set", "gains.p1=0.01", "--set", "gains.p2=0.01"]) == 2


def test_certify_rejects_other_team_sizes(tmp_path, capsys):
    path = tmp_path / "two.toml"
    path.write_text("[scenario]\nn = 2\nm = 1\n[certificate]\nM1 = 9.0\nM2 = 9.0\nM3 = 0.1\n")
    assert main(["certify", str(path)]) == 1
    assert "one sheep and one dog" in capsys.readouterr().err


def test_batch_and_table_export(tmp_path):
    spec = tmp_path / "b.toml"
    spec.write_text("[scenario]\nhorizon = 2.0\n[batch]\ngrid = [[2, 2]]\ntrials = 2\n")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["batch", str(spec), "--format", "json", "--out", str(a)]) == 0
    assert main(["batch", str(spec), "--format", "json", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    csv_out = tmp_path / "t.csv"
    assert main(["export", "table", str(a), "--format", "csv", "--out", str(csv_out)]) == 0
    assert csv_out.read_text().startswith("n,m,trials,successes")
    assert main(["export", "table", str(csv_out), "--format", "json", "--out", str(tmp_path / "c.json")]) == 0
    assert (tmp_path / "c.json").read_bytes() == a.read_bytes()


def test_export_trajectory_ignores_verdict(tmp_path):
    path = tmp_path / "bare.toml"
    path.write_text("[scenario]\nhorizon = 1.0\nn = 1\nm = 0\n")
    out = tmp_path / "t.jsonl"
    assert main(["export", "trajectory", str(path), "--format", "jsonl", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 101


def test_no_temporary_files_left(one, tmp_path):
    main(["simulate", str(one), "--out", str(tmp_path / "t.csv")])
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]
