"""End-to-end tests of the command-line interface.

main() is driven in-process; one test exercises the installed module entry
point through a subprocess.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from trimtest.cli import main

from conftest import make_panel


@pytest.fixture
def workdir(tmp_path):
    data = make_panel(25, 4, seed=77)
    lines = ["y,x,unit"]
    for i in range(data.n_rows):
        lines.append(
            f"{float(data.column('y')[i])!r},{float(data.column('x')[i])!r},"
            f"c{data.cluster_ids[i]}"
        )
    csv_path = tmp_path / "panel.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    config = {
        "input": str(csv_path),
        "cluster_column": "unit",
        "model": {"type": "ols", "outcome": "y", "regressors": ["x"]},
        "weights": {
            "baseline": {"kind": "all_ones"},
            "adjusted": {"kind": "residual_trim", "multiplier": 1.5},
        },
        "bootstrap": {"iterations": 120, "seed": 9},
        "test": {"alpha": 0.05, "seed": 9},
        "output": {"directory": str(tmp_path / "out")},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return tmp_path, str(config_path)


class TestEstimate:
    def test_writes_estimates_and_prints_them(self, workdir, capsys):
        tmp_path, config = workdir
        assert main(["estimate", "--config", config]) == 0
        printed = json.loads(capsys.readouterr().out)
        with open(tmp_path / "out" / "estimates.json", encoding="utf-8") as fh:
            stored = json.load(fh)
        assert printed == stored
        assert printed["main"]["labels"] == ["x"]
        assert printed["main"]["baseline"][0] != printed["main"]["adjusted"][0]
        # Point estimation must not produce bootstrap artifacts.
        assert not os.path.exists(tmp_path / "out" / "draws_main.csv")


class TestBootstrapAndTest:
    def test_test_subcommand_writes_everything(self, workdir, capsys):
        tmp_path, config = workdir
        assert main(["test", "--config", config]) == 0
        out = capsys.readouterr().out
        assert "comparison: main" in out
        assert "p_formal" in out
        for name in ("results.json", "report.txt", "draws_main.csv"):
            assert os.path.exists(tmp_path / "out" / name)

    def test_bootstrap_subcommand_skips_table(self, workdir, capsys):
        tmp_path, config = workdir
        assert main(["bootstrap", "--config", config]) == 0
        out = capsys.readouterr().out
        assert out.startswith("wrote ")
        assert os.path.exists(tmp_path / "out" / "results.json")

    def test_outputs_identical_across_threads_and_runs(self, workdir, capsys):
        tmp_path, config = workdir
        contents = []
        for sub, threads in (("t1", "1"), ("t4", "4"), ("t1b", "1")):
            code = main(
                [
                    "test",
                    "--config",
                    config,
                    "--threads",
                    threads,
                    "--output",
                    str(tmp_path / sub),
                ]
            )
            assert code == 0
            blob = {}
            for name in ("results.json", "report.txt", "draws_main.csv"):
                with open(tmp_path / sub / name, "rb") as fh:
                    blob[name] = fh.read()
            contents.append(blob)
        capsys.readouterr()
        assert contents[0] == contents[1] == contents[2]

    def test_seed_override_changes_draws(self, workdir, capsys):
        tmp_path, config = workdir
        main(["bootstrap", "--config", config, "--output", str(tmp_path / "s9")])
        main(
            [
                "bootstrap",
                "--config",
                config,
                "--seed",
                "10",
                "--output",
                str(tmp_path / "s10"),
            ]
        )
        capsys.readouterr()
        a = (tmp_path / "s9" / "draws_main.csv").read_bytes()
        b = (tmp_path / "s10" / "draws_main.csv").read_bytes()
        assert a != b


class TestReport:
    def test_report_matches_stored_pvalues(self, workdir, capsys):
        tmp_path, config = workdir
        main(["test", "--config", config])
        capsys.readouterr()
        assert main(["report", "--output", str(tmp_path / "out")]) == 0
        regenerated = json.loads(capsys.readouterr().out)
        with open(tmp_path / "out" / "results.json", encoding="utf-8") as fh:
            stored = json.load(fh)
        tests = stored["comparisons"]["main"]["tests"]
        for label, t in tests.items():
            assert regenerated["main"][label] == t["p_value_formal"]


class TestPlotData:
    def test_grid_from_draws(self, workdir, capsys):
        tmp_path, config = workdir
        main(["test", "--config", config])
        capsys.readouterr()
        draws = str(tmp_path / "out" / "draws_main.csv")
        grid_out = str(tmp_path / "grid.csv")
        code = main(
            ["plot-data", "--draws", draws, "--columns", "1,2", "--output", grid_out]
        )
        assert code == 0
        meta = json.loads(capsys.readouterr().out)
        assert meta["bandwidth_x"] != meta["bandwidth_y"]
        assert len(meta["point"]) == 2
        with open(grid_out, encoding="utf-8") as fh:
            header = fh.readline().strip()
        assert header == "x,y,density"

    def test_zero_based_columns_rejected(self, workdir, capsys):
        tmp_path, config = workdir
        main(["test", "--config", config])
        capsys.readouterr()
        draws = str(tmp_path / "out" / "draws_main.csv")
        code = main(
            [
                "plot-data",
                "--draws",
                draws,
                "--columns",
                "0,1",
                "--output",
                str(tmp_path / "g.csv"),
            ]
        )
        assert code == 2
        assert "out of range" in capsys.readouterr().err

    def test_malformed_columns_rejected(self, workdir, capsys):
        tmp_path, config = workdir
        code = main(
            [
                "plot-data",
                "--draws",
                "whatever.csv",
                "--columns",
                "a,b",
                "--output",
                str(tmp_path / "g.csv"),
            ]
        )
        assert code == 2
        assert "comma-separated integers" in capsys.readouterr().err


class TestExitCodes:
    def test_usage_error_is_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 1
        capsys.readouterr()

    def test_missing_required_flag_is_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["test"])
        assert exc.value.code == 1
        capsys.readouterr()

    def test_missing_config_file_is_exit_2(self, tmp_path, capsys):
        code = main(["test", "--config", str(tmp_path / "nope.json")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_invalid_json_config_is_exit_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        code = main(["test", "--config", str(p)])
        assert code == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_input_csv_is_exit_2(self, workdir, tmp_path, capsys):
        _, config = workdir
        raw = json.loads(open(config, encoding="utf-8").read())
        raw["input"] = str(tmp_path / "gone.csv")
        p = tmp_path / "config2.json"
        p.write_text(json.dumps(raw), encoding="utf-8")
        code = main(["test", "--config", str(p)])
        assert code == 2
        err = capsys.readouterr().err
        assert "[load]" in err

    def test_numerical_failure_is_exit_3(self, workdir, capsys):
        # One bootstrap draw gives a zero covariance matrix while the
        # baseline and adjusted estimates differ, which the robustness test
        # rejects as inconsistent.
        _, config = workdir
        code = main(["test", "--config", config, "--iterations", "1"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err


class TestModuleEntryPoint:
    def test_python_dash_m_runs(self, workdir):
        tmp_path, config = workdir
        proc = subprocess.run(
            [sys.executable, "-m", "trimtest", "estimate", "--config", config],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["main"]["labels"] == ["x"]
