"""Command-line interface: exit codes, output files, sweeps and offline verification."""

import json

import pytest

from safesmc import cli, csvio
from safesmc.config import DEMOS, demo_text


@pytest.fixture
def s1a_cfg(tmp_path):
    path = tmp_path / "robot-s1a.toml"
    path.write_text(demo_text("robot-s1a"))
    return path


def test_run_writes_outputs(s1a_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", str(s1a_cfg), "--out-dir", str(out), "--t-end", "1.5", "--plot-script"])
    assert code == cli.EXIT_OK
    for name in ("robot-s1a.csv", "robot-s1a.txt", "robot-s1a.json", "robot-s1a_plot.py"):
        assert (out / name).exists()
    summary = json.loads((out / "robot-s1a.json").read_text())
    assert summary["exit_code"] == 0 and summary["events"]["channel"] == 2
    assert "[PASS] safety" in capsys.readouterr().out
    compile((out / "robot-s1a_plot.py").read_text(), "plot", "exec")


def test_run_without_safeguard_reports_violation(s1a_cfg, tmp_path, capsys):
    code = cli.main(["run", str(s1a_cfg), "--no-safeguard", "--no-files", "--t-end", "0.5", "-q"])
    assert code == cli.EXIT_UNSAFE
    assert "safety violation" in capsys.readouterr().err


def test_incompatible_reports_time(tmp_path, capsys):
    code = cli.main(["demo", "robot-incompatible", "--out-dir", str(tmp_path), "-q"])
    assert code == cli.EXIT_INFEASIBLE
    err = capsys.readouterr().err
    assert "infeasible" in err and "t=14.9" in err
    summary = json.loads((tmp_path / "robot-incompatible.json").read_text())
    assert summary["status"] == "infeasible" and summary["events"]["infeasible_at"] == pytest.approx(14.9)
    assert (tmp_path / "robot-incompatible.csv").exists()


def test_fallback_flag(tmp_path):
    code = cli.main(["demo", "robot-incompatible", "--remark3-fallback", "--no-files", "-q", "--t-end", "16"])
    assert code in (cli.EXIT_OK, cli.EXIT_UNSAFE)


def test_verify_matches_run(s1a_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    # the horizon must cover the reaching time for every monitor to pass
    assert cli.main(["run", str(s1a_cfg), "--out-dir", str(out), "--t-end", "1.5", "-q"]) == 0
    run_summary = json.loads((out / "robot-s1a.json").read_text())
    code = cli.main(["verify", str(out / "robot-s1a.csv"), str(s1a_cfg), "--json", str(tmp_path / "v.json")])
    assert code == cli.EXIT_OK
    ver = json.loads((tmp_path / "v.json").read_text())
    assert ver == run_summary["verification"]
    assert "overall         PASS" in capsys.readouterr().out


def test_verify_bad_csv(s1a_cfg, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cli.main(["verify", str(bad), str(s1a_cfg)]) == cli.EXIT_USAGE


def test_verify_detects_tampering(s1a_cfg, tmp_path):
    out = tmp_path / "out"
    cli.main(["run", str(s1a_cfg), "--out-dir", str(out), "--t-end", "1.0", "-q"])
    traj = csvio.read_csv(out / "robot-s1a.csv")
    traj.u_s[:] *= 0.5
    csvio.write_csv(traj, out / "tampered.csv")
    assert cli.main(["verify", str(out / "tampered.csv"), str(s1a_cfg)]) == cli.EXIT_FAILURE


class TestDemo:
    def test_list(self, capsys):
        assert cli.main(["demo", "--list"]) == 0
        listed = capsys.readouterr().out
        assert all(name in listed for name in DEMOS)

    def test_write_config(self, tmp_path):
        dest = tmp_path / "z50.toml"
        assert cli.main(["demo", "robot-z50", "--write-config", str(dest)]) == 0
        assert dest.read_text() == demo_text("robot-z50")

    def test_unknown(self, capsys):
        assert cli.main(["demo", "robot-s9"]) == cli.EXIT_USAGE
        assert "unknown demo" in capsys.readouterr().err

    def test_missing_name(self):
        assert cli.main(["demo"]) == cli.EXIT_USAGE


class TestSweep:
    def test_empty_list_is_usage_error(self, s1a_cfg, capsys):
        assert cli.main(["sweep", str(s1a_cfg), "h_bar"]) == cli.EXIT_USAGE
        assert "empty" in capsys.readouterr().err

    def test_unknown_parameter(self, s1a_cfg):
        assert cli.main(["sweep", str(s1a_cfg), "beta0", "1"]) == cli.EXIT_USAGE

    def test_non_numeric_value(self, s1a_cfg):
        assert cli.main(["sweep", str(s1a_cfg), "h_bar", "one"]) == cli.EXIT_USAGE

    def test_table_and_per_run_errors(self, s1a_cfg, tmp_path, capsys):
        code = cli.main(["sweep", str(s1a_cfg), "h1", "0.3,1", "--t-end", "0.5", "--workers", "2",
                         "--json", str(tmp_path / "sw.json"), "--out-dir", str(tmp_path / "runs")])
        assert code == cli.EXIT_OK
        rows = json.loads((tmp_path / "sw.json").read_text())["rows"]
        assert [r["value"] for r in rows] == [0.3, 1.0]
        assert rows[0]["status"].startswith("invalid") and rows[1]["status"] == "ok"
        assert (tmp_path / "runs" / "robot-s1a__h1=1.csv").exists()
        assert "invalid" in capsys.readouterr().out

    def test_dt_convergence(self, s1a_cfg, tmp_path):
        cli.main(["sweep", str(s1a_cfg), "dt", "1e-3", "5e-4", "--t-end", "1.0", "--json", str(tmp_path / "d.json")])
        rows = json.loads((tmp_path / "d.json").read_text())["rows"]
        assert abs(rows[0]["min_h"] - rows[1]["min_h"]) < 1e-2

    def test_demo_prefix(self, capsys):
        assert cli.main(["sweep", "demo:robot-s1a", "z0", "-10", "--t-end", "0.3"]) == 0


def test_trend():
    assert cli.trend([1, 2, 3], [1.0, 2.0, 2.0]) == "non-decreasing"
    assert cli.trend([3, 1, 2], [1.0, 3.0, 2.0]) == "non-increasing"
    assert cli.trend([1, 2, 3], [1.0, 3.0, 2.0]) == "non-monotone"
    assert cli.trend([1], [1.0]) == "insufficient data"


def test_usage_errors_exit_1(capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["explode"]) == cli.EXIT_USAGE
    assert cli.main(["run"]) == cli.EXIT_USAGE


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.toml")]) == cli.EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err
