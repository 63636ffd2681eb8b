"""Tests for the command-line front end: JSON reports, exit codes and
deterministic table output."""

import io
import json
import subprocess
import sys

import pytest

from uvartest.cli import EXIT_DEGENERATE, EXIT_INPUT_ERROR, EXIT_OK, main
from uvartest.simlab import RejectionTable

WORKED_CSV = "treatment,value\na,0\na,2\nb,1\nb,3\n"

REPORT_KEYS = {
    "method",
    "statistic",
    "p_value",
    "reject",
    "alpha",
    "k",
    "n",
    "group_sizes",
    "kappa",
    "extras",
}


@pytest.fixture
def worked_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(WORKED_CSV)
    return str(path)


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(
        json.dumps(
            {
                "name": "tiny",
                "designs": [{"kind": "balanced", "k": 5, "m": 3}],
                "b": {"family": "normal"},
                "e": {"family": "normal", "variance": 1.0},
                "mu": 2.0,
                "sigma_b2_grid": [0.0, 0.5],
                "alpha": 0.05,
                "replicates": 120,
                "seed": {"master_seed": 11},
                "methods": ["U", "F"],
            }
        )
    )
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCmdTest:
    def test_u_method_worked_example(self, worked_csv, capsys):
        code, out, _ = _run(capsys, "test", worked_csv, "--method", "u")
        assert code == EXIT_OK
        report = json.loads(out)
        assert set(report) == REPORT_KEYS
        assert report["method"] == "U"
        assert report["statistic"] == pytest.approx(-0.2887, abs=1e-4)
        assert report["p_value"] == pytest.approx(0.6136, abs=1e-4)
        assert report["reject"] is False
        assert report["alpha"] == 0.05
        assert report["k"] == 2
        assert report["n"] == 4
        assert report["group_sizes"] == [2, 2]
        assert report["kappa"] == 1.0

    def test_f_method_worked_example(self, worked_csv, capsys):
        code, out, _ = _run(capsys, "test", worked_csv, "--method", "f")
        assert code == EXIT_OK
        report = json.loads(out)
        assert set(report) == REPORT_KEYS
        assert report["statistic"] == pytest.approx(0.5, abs=1e-12)
        assert report["p_value"] == pytest.approx(0.5528, abs=1e-4)
        assert report["extras"]["df"] == [1.0, 2.0]

    def test_both_is_schema_stable(self, worked_csv, capsys):
        code, out, _ = _run(capsys, "test", worked_csv, "--method", "both")
        assert code == EXIT_OK
        reports = json.loads(out)
        assert [r["method"] for r in reports] == ["U", "F"]
        for report in reports:
            assert set(report) == REPORT_KEYS

    def test_perm_method(self, worked_csv, capsys):
        code, out, _ = _run(
            capsys, "test", worked_csv, "--method", "perm", "--n-perm", "99", "--seed", "5"
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert set(report) == REPORT_KEYS
        assert report["method"] == "PERM"
        assert report["extras"]["n_perm"] == 99
        assert 0.0 < report["p_value"] <= 1.0

    def test_perm_seed_env_default(self, worked_csv, capsys, monkeypatch):
        monkeypatch.setenv("UVARTEST_SEED", "5")
        _, out_env, _ = _run(capsys, "test", worked_csv, "--method", "perm", "--n-perm", "99")
        monkeypatch.delenv("UVARTEST_SEED")
        _, out_flag, _ = _run(
            capsys, "test", worked_csv, "--method", "perm", "--n-perm", "99", "--seed", "5"
        )
        assert out_env == out_flag

    def test_alpha_flag(self, worked_csv, capsys):
        code, out, _ = _run(capsys, "test", worked_csv, "--method", "u", "--alpha", "0.7")
        report = json.loads(out)
        assert report["alpha"] == 0.7
        assert report["reject"] is True  # p ~ 0.61 <= 0.7

    def test_degenerate_exits_1(self, tmp_path, capsys):
        path = tmp_path / "flat.csv"
        path.write_text("treatment,value\na,5\na,5\nb,5\nb,5\n")
        code, _, err = _run(capsys, "test", str(path), "--method", "u")
        assert code == EXIT_DEGENERATE
        assert "constant" in err

    def test_singleton_treatment_exits_2(self, tmp_path, capsys):
        path = tmp_path / "short.csv"
        path.write_text("treatment,value\na,1\na,2\nb,3\n")
        code, _, err = _run(capsys, "test", str(path))
        assert code == EXIT_INPUT_ERROR
        assert "at least 2" in err
        assert "'b'" in err

    def test_malformed_row_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("treatment,value\na,1\na,2\nb,not-a-number\nb,4\n")
        code, _, err = _run(capsys, "test", str(path))
        assert code == EXIT_INPUT_ERROR
        assert "line 4" in err

    def test_wrong_header_exits_2(self, tmp_path, capsys):
        path = tmp_path / "head.csv"
        path.write_text("group,y\na,1\na,2\nb,3\nb,4\n")
        code, _, err = _run(capsys, "test", str(path))
        assert code == EXIT_INPUT_ERROR
        assert "treatment,value" in err

    def test_missing_file_exits_2(self, capsys):
        code, _, _ = _run(capsys, "test", "/nonexistent/data.csv")
        assert code == EXIT_INPUT_ERROR

    def test_crlf_accepted(self, tmp_path, capsys):
        path = tmp_path / "crlf.csv"
        path.write_bytes(WORKED_CSV.replace("\n", "\r\n").encode())
        code, out, _ = _run(capsys, "test", str(path), "--method", "u")
        assert code == EXIT_OK
        assert json.loads(out)["n"] == 4


class TestCmdSimulate:
    def test_writes_csv(self, tiny_config, tmp_path, capsys):
        out_file = tmp_path / "table.csv"
        code, _, err = _run(capsys, "simulate", tiny_config, "--out", str(out_file))
        assert code == EXIT_OK
        lines = out_file.read_text().splitlines()
        assert lines[0] == "scenario,k,design,sigma_b2,method,rate,se,replicates"
        assert len(lines) == 1 + 2 * 2  # grid x methods
        # one summary line per cell on stderr
        assert len(err.strip().splitlines()) == 4

    def test_csv_round_trips_into_table(self, tiny_config, tmp_path, capsys):
        out_file = tmp_path / "table.csv"
        _run(capsys, "simulate", tiny_config, "--out", str(out_file))
        with open(out_file) as fh:
            table = RejectionTable.from_csv(fh)
        buf = io.StringIO()
        table.to_csv(buf)
        assert buf.getvalue() == out_file.read_text()

    def test_reruns_are_byte_identical(self, tiny_config, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        _run(capsys, "simulate", tiny_config, "--out", str(a))
        _run(capsys, "simulate", tiny_config, "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_worker_threads_do_not_change_output(self, tiny_config, tmp_path, capsys):
        a = tmp_path / "w1.csv"
        b = tmp_path / "w4.csv"
        _run(capsys, "simulate", tiny_config, "--out", str(a), "--workers", "1")
        _run(capsys, "simulate", tiny_config, "--out", str(b), "--workers", "4")
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_output(self, tiny_config, tmp_path, capsys):
        a = tmp_path / "s1.csv"
        b = tmp_path / "s2.csv"
        _run(capsys, "simulate", tiny_config, "--out", str(a), "--seed", "1")
        _run(capsys, "simulate", tiny_config, "--out", str(b), "--seed", "2")
        assert a.read_bytes() != b.read_bytes()

    def test_seed_env_matches_flag(self, tiny_config, tmp_path, capsys, monkeypatch):
        a = tmp_path / "env.csv"
        b = tmp_path / "flag.csv"
        monkeypatch.setenv("UVARTEST_SEED", "9")
        _run(capsys, "simulate", tiny_config, "--out", str(a))
        monkeypatch.delenv("UVARTEST_SEED")
        _run(capsys, "simulate", tiny_config, "--out", str(b), "--seed", "9")
        assert a.read_bytes() == b.read_bytes()

    def test_replicates_override(self, tiny_config, tmp_path, capsys):
        out_file = tmp_path / "r.csv"
        _run(capsys, "simulate", tiny_config, "--out", str(out_file), "--replicates", "40")
        with open(out_file) as fh:
            table = RejectionTable.from_csv(fh)
        assert all(c.replicates == 40 for c in table.cells)

    def test_markdown_format(self, tiny_config, capsys):
        code, out, _ = _run(capsys, "simulate", tiny_config, "--format", "md",
                            "--replicates", "40")
        assert code == EXIT_OK
        assert out.startswith("| sigma_b2 |")

    def test_stdout_when_no_out(self, tiny_config, capsys):
        code, out, _ = _run(capsys, "simulate", tiny_config, "--replicates", "40")
        assert code == EXIT_OK
        assert out.splitlines()[0] == "scenario,k,design,sigma_b2,method,rate,se,replicates"

    def test_unknown_preset_exits_2(self, capsys):
        code, _, err = _run(capsys, "simulate", "table9-made-up")
        assert code == EXIT_INPUT_ERROR
        assert "preset" in err

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"designs": []}')
        code, _, _ = _run(capsys, "simulate", str(path))
        assert code == EXIT_INPUT_ERROR

    def test_malformed_json_exits_2(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        code, _, _ = _run(capsys, "simulate", str(path))
        assert code == EXIT_INPUT_ERROR


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text(WORKED_CSV)
        proc = subprocess.run(
            [sys.executable, "-m", "uvartest", "test", str(path), "--method", "u"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["method"] == "U"
