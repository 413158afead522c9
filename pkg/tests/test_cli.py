import csv

import pytest

from robust_comp.cli import main


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--set", "antennas_per_rru=2", "--set", "num_slots=8",
                 "--reps", "1", "--out", str(out)])
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"slots.csv", "summary.csv",
                                                 "resolved_config.yaml"}
    assert "avg sum power" in capsys.readouterr().out


def test_config_file_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("antennas_per_rru: 2\nnum_slots: 5\nnum_replications: 1\n")
    code = main(["sweep", "--config", str(cfg), "--axis", "V", "--values", "0.1,10",
                 "--out", str(tmp_path / "sw")])
    assert code == 0
    with open(tmp_path / "sw" / "summary.csv") as fh:
        next(fh)
        rows = list(csv.DictReader(fh))
    assert [float(r["V"]) for r in rows] == [0.1, 10.0]
    assert "V=0.1" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["run", "--set", "violation_tolerance=0", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 5
