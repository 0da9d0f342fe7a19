import csv
import subprocess
import sys

from blemesh.cli import main
from blemesh.config import defaults, dumps, loads


def test_runs_and_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["--scenario", "case2", "--seed", "3", "--runs", "2", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert sorted(p.rsplit("/", 1)[-1] for p in printed) == [
        "case2_proposed_seed3.csv", "case2_proposed_seed4.csv", "summary.csv",
    ]
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["metric"] for r in rows} >= {"avg_power_mw", "latency_s"}
    assert all(r["n"] == "2" for r in rows if r["metric"] == "avg_power_mw")


def test_flags_override_config(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text(dumps(defaults("case2")), encoding="utf-8")
    assert main(["--config", str(path), "--seed", "11", "--runs", "3", "--dump-config"]) == 0
    cfg = loads(capsys.readouterr().out)
    assert (cfg.scenario.seed, cfg.scenario.runs, cfg.scenario.name) == (11, 3, "case2")


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[failure]\nnode = 77\n", encoding="utf-8")
    assert main(["--config", str(path)]) == 2
    assert "node 77" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "none.ini")]) == 2


def test_output_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["--scenario", "case2", "--out", str(blocker / "sub")]) == 1
    assert "cannot create output directory" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "blemesh", "--scenario", "case3", "--dump-config"],
        capture_output=True, text=True, check=True,
    )
    assert loads(proc.stdout) == defaults("case3")


def test_reruns_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--scenario", "case3", "--seed", "2", "--out", str(d)]) == 0
    for name in ("case3_proposed_seed2.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
