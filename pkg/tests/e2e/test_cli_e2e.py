"""End-to-end tests running the dynlab CLI in a subprocess."""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from dynlab.report_store import load_csv

REPO_ROOT = Path(__file__).resolve().parents[2]
FIXTURES = REPO_ROOT / "dynlab" / "fixtures"

# Small enough for a laptop, large enough for stable estimates
DESK_FLAGS = ["--seed", "7", "--budget", "20000", "--samples", "300", "--pmax", "64", "--threads", "1"]


class TestCli:
    """Run each subcommand the way a user would."""

    @classmethod
    def setup_class(cls):
        os.chdir(REPO_ROOT)

    def run_dynlab(self, *args, tmp_path=None):
        env = os.environ.copy()
        # an empty run file keeps user and project settings out of the runs
        if tmp_path is not None:
            run_file = tmp_path / "empty.yaml"
            run_file.write_text("")
            env["DYNLAB_CONFIG"] = str(run_file)
        cmd = [sys.executable, "-m", "dynlab.main", *args]
        return subprocess.run(cmd, capture_output=True, text=True, env=env)

    def test_version(self):
        result = self.run_dynlab("--version")
        assert result.returncode == 0
        assert result.stdout.startswith("dynlab version")

    def test_validate_fixture(self, tmp_path):
        result = self.run_dynlab("validate", str(FIXTURES / "logistic_4_0.json"), tmp_path=tmp_path)
        assert result.returncode == 0, result.stderr
        assert json.loads(result.stdout)["report"]["validation"]["passed"]

    def test_validate_escaping_map(self, tmp_path):
        path = tmp_path / "escape.json"
        path.write_text(json.dumps({"family": "logistic", "params": {"a": 4.2}}))
        result = self.run_dynlab("validate", str(path), tmp_path=tmp_path)
        assert result.returncode == 1
        assert "f(M) ⊆ M" in result.stderr

    def test_validate_malformed(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("[1, 2")
        result = self.run_dynlab("validate", str(path), tmp_path=tmp_path)
        assert result.returncode == 2
        assert "❌" in result.stderr

    def test_pullback_with_zero_steps(self, tmp_path):
        out = tmp_path / "out"
        result = self.run_dynlab(
            "pullback", str(FIXTURES / "logistic_4_0.json"), "0.75", "0", "0.7", "0.8", "--out", str(out),
            tmp_path=tmp_path,
        )
        assert result.returncode == 0, result.stderr
        report = json.loads((out / "pullback.json").read_text())["report"]
        assert report["chain"]["intervals"] == [[0.7, 0.8]]
        assert report["stats"]["order"] == 0

    def test_pullback_outside_target(self, tmp_path):
        result = self.run_dynlab(
            "pullback", str(FIXTURES / "logistic_4_0.json"), "0.25", "1", "0.1", "0.2", tmp_path=tmp_path
        )
        assert result.returncode == 1

    def test_classify_reproducible(self, tmp_path):
        args = ["classify", str(FIXTURES / "logistic_3_2.json"), "--random", "10", *DESK_FLAGS]
        first = self.run_dynlab(*args, tmp_path=tmp_path)
        second = self.run_dynlab(*args, tmp_path=tmp_path)
        assert first.returncode == 0, first.stderr
        assert first.stdout == second.stdout

    @pytest.mark.timeout(600)
    def test_decompose_two_cycle(self, tmp_path):
        out = tmp_path / "out"
        result = self.run_dynlab(
            "decompose", str(FIXTURES / "logistic_3_2.json"), *DESK_FLAGS, "--out", str(out), tmp_path=tmp_path
        )
        assert result.returncode == 0, result.stderr
        report = json.loads((out / "decompose.json").read_text())["report"]["decomposition"]
        assert [a["klass"] for a in report["attractors"]] == ["A1_limit_cycle"]
        header, rows = load_csv(out / "decompose_attractors.csv")
        assert header[:3] == ["attractor", "klass", "period"]
        assert rows[0][:3] == [0, "A1_limit_cycle", 2]

    def test_scan_empty_range(self, tmp_path):
        result = self.run_dynlab("scan", "logistic", "--range", "3.9", "3.1", "--levels", "0", tmp_path=tmp_path)
        assert result.returncode == 0, result.stderr
        assert result.stdout.splitlines() == ["param,attractor_class,period,components,kernel_measure"]

    @pytest.mark.timeout(600)
    def test_scan_single_step(self, tmp_path):
        out = tmp_path / "out"
        result = self.run_dynlab(
            "scan", "logistic", "--range", "3.2", "3.8", "--steps", "1", "--levels", "0", *DESK_FLAGS,
            "--out", str(out), tmp_path=tmp_path,
        )
        assert result.returncode == 0, result.stderr
        header, rows = load_csv(out / "scan.csv")
        assert len(rows) == 1
        assert rows[0][:3] == [3.2, "A1_limit_cycle", 2]
        assert json.loads((out / "scan.json").read_text())["report"]["rows"] == 1

    @pytest.mark.timeout(900)
    def test_classify_feigenbaum_fixture(self, tmp_path):
        result = self.run_dynlab(
            "classify", str(FIXTURES / "logistic_feigenbaum.json"), "0.123", "0.377", "--seed", "7", "--threads", "1",
            tmp_path=tmp_path,
        )
        assert result.returncode == 0, result.stderr
        assert json.loads(result.stdout)["report"]["counts"] == {"feigenbaum_attractor": 2}

    @pytest.mark.timeout(600)
    def test_recurrence_two_cycle(self, tmp_path):
        out = tmp_path / "out"
        result = self.run_dynlab(
            "recurrence", str(FIXTURES / "logistic_3_2.json"), *DESK_FLAGS, "--out", str(out), tmp_path=tmp_path
        )
        assert result.returncode == 0, result.stderr
        report = json.loads((out / "recurrence.json").read_text())["report"]["recurrence"]
        assert report["R_min"] == 20
        assert "kernel_matches_attractors" in report
        header, rows = load_csv(out / "recurrence.csv")
        assert header[:3] == ["cell", "lo", "hi"]
        assert rows
        assert all(row[3] > 0 for row in rows)

    @pytest.mark.timeout(900)
    def test_decompose_same_under_threads(self, tmp_path):
        flags = DESK_FLAGS[:-2]  # drop --threads 1
        reports = {}
        for threads in ("1", "3"):
            out = tmp_path / f"threads_{threads}"
            result = self.run_dynlab(
                "decompose", str(FIXTURES / "logistic_3_2.json"), *flags, "--threads", threads, "--out", str(out),
                tmp_path=tmp_path,
            )
            assert result.returncode == 0, result.stderr
            reports[threads] = json.loads((out / "decompose.json").read_text())["report"]["decomposition"]
        assert reports["1"] == reports["3"]
