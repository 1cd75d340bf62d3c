from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from twolevelcp.cli import main, parse_floats, parse_sites, ValidationError

SIM = ["simulate", "--radius", "6", "--lambda", "3", "--mu", "3", "--delta", "1", "--horizon", "2", "--burn-in", "3"]
SCAN = ["scan", "--radius", "10", "--lambda", "3", "--delta", "1", "--mu-grid", "0.5,2", "--horizon", "3",
        "--reps", "40", "--burn-in", "3"]


def run(capsys, argv) -> tuple[int, str, str]:
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_helpers() -> None:
    assert parse_sites("0,1;2,-3", 2) == [(0, 1), (2, -3)]
    assert parse_sites("", 1) == []
    assert parse_floats("0.5, 1;2") == [0.5, 1.0, 2.0]
    with pytest.raises(ValidationError):
        parse_sites("0,1", 1)
    with pytest.raises(ValidationError):
        parse_floats("a")


def test_oracle_check_single_site(capsys) -> None:
    code, out, _ = run(capsys, ["oracle-check", "--k", "1", "--lambda", "1", "--mu", "1", "--delta", "1", "--t", "1",
                                  "--format", "json"])
    assert code == 0
    doc = json.loads(out)
    assert doc["header"]["version"] == "0.1.0"
    assert "0.36787944117144233" in out
    assert repr(math.exp(-1)) == "0.36787944117144233"


def test_missing_flag_names_it(capsys) -> None:
    code, _, err = run(capsys, ["simulate", "--radius", "4", "--seed", "1"])
    assert code == 2
    assert "--horizon" in err
    code, _, err = run(capsys, SIM)
    assert code == 2 and "--seed" in err


def test_unknown_flag_and_bad_values(capsys) -> None:
    assert run(capsys, [*SIM, "--seed", "1", "--bogus", "3"])[0] == 2
    assert run(capsys, [*SIM, "--seed", "-4"])[0] == 2
    code, _, err = run(capsys, [*SIM, "--seed", "1", "--threads", "0"])
    assert code == 2 and "threads" in err
    code, _, err = run(capsys, [*SIM[:-4], "--horizon", "-1", "--seed", "1"])
    assert code == 2


@pytest.mark.parametrize("argv", [SIM, SCAN])
def test_byte_identical_reruns(capsys, argv) -> None:
    a = run(capsys, [*argv, "--seed", "42"])
    b = run(capsys, [*argv, "--seed", "42"])
    c = run(capsys, [*argv, "--seed", "42", "--threads", "3"])
    assert a[0] == 0 and a[1] == b[1] == c[1]
    assert run(capsys, [*argv, "--seed", "43"])[1] != a[1]


def test_csv_header_and_out_file(capsys, tmp_path: Path) -> None:
    dest = tmp_path / "sim.csv"
    code, out, _ = run(capsys, [*SIM, "--seed", "7", "--format", "csv", "--out", str(dest)])
    assert code == 0 and out == ""
    lines = dest.read_text().splitlines()
    assert lines[0] == "# twolevelcp 0.1.0"
    assert lines[1].startswith("# config=") and lines[2] == "# seed=7"
    cfg = json.loads(lines[1][len("# config="):])
    assert cfg["radius"] == 6 and cfg["lam"] == 3.0


def test_config_file_with_flag_override(capsys, tmp_path: Path) -> None:
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# scan settings\nradius = 10\nlambda = 3\ndelta = 1\nmu_grid = 0.5,2\nhorizon = 3\nreps = 40\nburn_in = 3\n")
    code, out, _ = run(capsys, ["scan", "--config", str(cfg), "--seed", "42"])
    assert code == 0
    assert out == run(capsys, [*SCAN, "--seed", "42"])[1]
    code, out2, _ = run(capsys, ["scan", "--config", str(cfg), "--seed", "42", "--reps", "20"])
    assert json.loads(out2)["header"]["config"]["reps"] == 20
    bad = tmp_path / "bad.cfg"
    bad.write_text("radius\n")
    assert run(capsys, ["scan", "--config", str(bad), "--seed", "1"])[0] == 2


def test_seed_auto_reported(capsys) -> None:
    code, out, err = run(capsys, [*SIM, "--seed", "auto", "--format", "json"])
    assert code == 0
    seed = int(err.strip().rsplit("seed=", 1)[1])
    assert json.loads(out)["header"]["seed"] == seed
    assert run(capsys, [*SIM, "--seed", str(seed), "--format", "json"])[1] == out


def test_other_subcommands_run(capsys, tmp_path: Path) -> None:
    cmds = [
        ["dual-check", "--radius", "4", "--lambda", "2", "--mu", "2", "--delta", "1", "--t", "1",
         "--B", "0", "--C", "0;1", "--D", "1", "--reps", "50", "--burn-in", "3", "--seed", "1"],
        ["block-estimate", "--n", "1", "--L", "2", "--T", "1", "--lambda", "3", "--mu", "3", "--delta", "1",
         "--reps", "20", "--burn-in", "3", "--seed", "1"],
        ["op-compare", "--p", "0.8", "--rows", "30", "--reps", "10", "--log-rows", "10,30", "--seed", "1", "--format", "json"],
        ["converge", "--radius", "10", "--lambda", "3", "--mu", "3", "--delta", "1", "--B", "0", "--D", "0",
         "--t-grid", "1,2", "--reps", "30", "--burn-in", "3", "--seed", "1",
         "--csv-out", str(tmp_path / "conv.csv")],
    ]
    for argv in cmds:
        code, out, err = run(capsys, argv)
        assert code == 0, (argv[0], err)
        assert json.loads(out)["header"]["command"] == argv[0]
    assert (tmp_path / "conv.csv").read_text().startswith("# twolevelcp")
    # padding violation surfaces as invalid input
    code, _, err = run(capsys, [*cmds[3][:2], "3", *cmds[3][3:-2]])
    assert code == 2 and "padding" in err


def test_module_entry_point() -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "twolevelcp.cli", "oracle-check", "--k", "1", "--lambda", "1", "--mu", "1",
         "--delta", "1", "--t", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "0.36787944117144233" in proc.stdout
