"""Command-line interface tests.

Oracles: exit codes and output shapes are restated from the interface
contract (0 success, 2 usage, 3 parse, 4 divergence, 5 time limit; every
failure ends with one ``error:`` line); short all-aerial missions keep
the closed-loop invocations fast.
"""

import subprocess
import sys

import numpy as np
import pytest

from cyclosim.cli import main
from cyclosim.fsm import Medium
from cyclosim.mission import Action, Mission, Segment, save_mission

pytestmark = pytest.mark.usefixtures("keep_env_clean")


@pytest.fixture
def keep_env_clean(monkeypatch):
    monkeypatch.delenv("CYCLOSIM_CONFIG", raising=False)


@pytest.fixture(scope="module")
def mini_path(tmp_path_factory):
    mission = Mission(
        segments=(
            Segment(Medium.AERIAL, Action.TAKEOFF, np.array([100.0, 0.0, 10.0])),
            Segment(Medium.AERIAL, Action.FLY_TO, np.array([110.0, 5.0, 12.0])),
        ),
        start=np.array([100.0, 0.0, 0.0]),
    )
    path = tmp_path_factory.mktemp("missions") / "mini.yaml"
    save_mission(mission, path)
    return path


def _last_line(capsys):
    captured = capsys.readouterr()
    combined = (captured.out + captured.err).strip().splitlines()
    return captured, combined[-1] if combined else ""


class TestValidateFsm:
    def test_builtin_trace(self, capsys):
        assert main(["validate-fsm", "--mission", "builtin"]) == 0
        out = capsys.readouterr().out.splitlines()
        trace = [line for line in out if ":" in line and "result" not in line]
        assert len(trace) == 11
        assert trace[0].endswith("terrestrial/static")
        assert trace[-1].endswith("aquatic/driving")

    def test_empty_mission(self, tmp_path, capsys):
        path = tmp_path / "empty.yaml"
        path.write_text("start: [0.0, 0.0, 0.0]\nsegments: []\n")
        assert main(["validate-fsm", "--mission", str(path)]) == 0
        out = capsys.readouterr().out
        assert "terrestrial/static" in out

    def test_band_violation_names_segment(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(
            "segments:\n"
            "- medium: aerial\n"
            "  action: fly_to\n"
            "  target: [350.0, 0.0, 120.0]\n"
        )
        assert main(["validate-fsm", "--mission", str(path)]) == 3
        _, last = _last_line(capsys)
        assert last.startswith("error:")
        assert "segment 0" in last


class TestSimulate:
    def test_mini_mission_completes(self, mini_path, tmp_path, capsys):
        code = main([
            "simulate", "--mission", str(mini_path), "--controller", "pid",
            "--out", str(tmp_path), "--seed", "7",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert out.strip().splitlines()[-1].startswith("result: completed")
        log = tmp_path / "mini_pid.csv"
        metrics = tmp_path / "mini_pid_metrics.txt"
        assert log.exists() and metrics.exists()
        header = log.read_text().splitlines()[0]
        assert header.startswith("t,medium,substate,px")

    def test_missing_mission_names_path(self, tmp_path, capsys):
        code = main([
            "simulate", "--mission", str(tmp_path / "nope.yaml"),
            "--out", str(tmp_path),
        ])
        assert code == 3
        _, last = _last_line(capsys)
        assert last.startswith("error:")
        assert "nope.yaml" in last

    def test_aerial_only_rejects_multimodal(self, tmp_path, capsys):
        code = main([
            "simulate", "--mission", "builtin", "--aerial-only",
            "--out", str(tmp_path),
        ])
        assert code == 2
        _, last = _last_line(capsys)
        assert last.startswith("error:")
        assert "segment 0" in last

    def test_aerial_only_accepts_aerial_mission(self, mini_path, tmp_path):
        code = main([
            "simulate", "--mission", str(mini_path), "--aerial-only",
            "--out", str(tmp_path),
        ])
        assert code == 0

    def test_time_limit_exit_code(self, mini_path, tmp_path, capsys):
        code = main([
            "simulate", "--mission", str(mini_path),
            "--duration-limit", "1.0", "--out", str(tmp_path),
        ])
        assert code == 5
        captured, last = _last_line(capsys)
        assert last.startswith("error:")
        assert (tmp_path / "mini_pid.csv").exists()

    def test_divergence_exit_code(self, mini_path, tmp_path, capsys):
        cfg = tmp_path / "weak.yaml"
        cfg.write_text("rotor_max: 1.0\n")
        code = main([
            "simulate", "--mission", str(mini_path), "--config", str(cfg),
            "--out", str(tmp_path),
        ])
        assert code == 4
        _, last = _last_line(capsys)
        assert last.startswith("error:")
        assert "diverged" in last

    def test_unknown_controller_is_usage_error(self, mini_path, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main([
                "simulate", "--mission", str(mini_path),
                "--controller", "lqr", "--out", str(tmp_path),
            ])
        assert exc.value.code == 2

    def test_env_config_fallback(self, mini_path, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CYCLOSIM_CONFIG", str(tmp_path / "missing.yaml"))
        code = main([
            "simulate", "--mission", str(mini_path), "--out", str(tmp_path),
        ])
        assert code == 3
        _, last = _last_line(capsys)
        assert "missing.yaml" in last


class TestCompare:
    def test_self_comparison_is_identical(self, mini_path, tmp_path, capsys):
        code = main([
            "compare", "--mission", str(mini_path),
            "--left", "pid", "--right", "pid", "--out", str(tmp_path),
        ])
        assert code == 0
        left = (tmp_path / "mini_left_pid.csv").read_bytes()
        right = (tmp_path / "mini_right_pid.csv").read_bytes()
        assert left == right
        table = (tmp_path / "mini_compare_pid_vs_pid.txt").read_text()
        for row in table.splitlines()[1:]:
            cells = row.split()
            assert cells[-1] == "0.0000"
            assert cells[-2] == "0.0000"

    def test_table_has_row_per_aerial_segment_per_axis(
        self, mini_path, tmp_path, capsys
    ):
        code = main([
            "compare", "--mission", str(mini_path), "--out", str(tmp_path),
        ])
        assert code == 0
        table = (tmp_path / "mini_compare_pid_vs_nmpc.txt").read_text()
        lines = table.splitlines()
        header = lines[0].split()
        assert "os_pid" in header and "os_nmpc" in header
        assert "rms_pid" in header and "rms_nmpc" in header
        rows = lines[1:]
        assert len(rows) == 2 * 3
        assert [r.split()[2] for r in rows] == ["x", "y", "z"] * 2


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "cyclosim.cli", "validate-fsm"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "aquatic/driving" in proc.stdout
