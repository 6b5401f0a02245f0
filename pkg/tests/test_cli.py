import json
import subprocess
import sys

import pytest

from fdmec.cli import build_parser, main
from fdmec.harness import read_records


def test_run_writes_results(tmp_path, capsys):
    code = main(["run", "--scale", "0.005", "--draws", "2", "--starts", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    records = read_records(tmp_path / "run_trials.csv")
    assert len(records) == 2 * 9
    assert (tmp_path / "run_summary.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_sweep_writes_caching_gains(tmp_path):
    code = main(["sweep", "--axis", "cache", "--values", "40", "--modes", "ccjt",
                 "--designs", "zf", "--no-hd", "--no-static", "--scale", "0.005",
                 "--draws", "2", "--starts", "1", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "sweep_cache_summary.json").read_text())
    assert summary["values"] == [0.0, 40.0]
    assert "cache=40.0|CCJT|ZF" in summary["rcg"]


def test_oracle_reports_gap(capsys):
    assert main(["oracle", "--mode", "CCJT_ZF", "--grid-n", "12", "--starts", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["K"] == 2
    assert out["t_sca"] <= out["t_grid"] * (1 + 1e-6)


def test_compare_hd(capsys):
    assert main(["compare-hd", "--design", "CCJT_ZF", "--trials", "2", "--starts", "1"]) == 0
    assert "reduction" in capsys.readouterr().out


def test_bad_design_is_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--designs", "mrt"])


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fdmec", "--help"], capture_output=True,
                         text=True, check=True)
    assert "compare-hd" in out.stdout
