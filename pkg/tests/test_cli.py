"""End-to-end tests for the command-line interface."""

import json
import os
import signal
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import pytest

from scenofuzz.cli import (
    EXIT_CONFIG,
    EXIT_INTERRUPTED,
    EXIT_OK,
    default_run_id,
    main,
)

PACKAGE_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = PACKAGE_ROOT / "configs"

MINI_CONFIG = """\
scenario:
  map_name: chain_3
  start_lane_id: lane_a
  end_lane_id: lane_a
  end_station: 60.0
  duration_limit: 12.0
testing_engine:
  algorithm:
    name: random
    parameters:
      max_evaluations: 50
"""


@pytest.fixture()
def mini_config_dir(tmp_path):
    config_dir = tmp_path / "configs"
    config_dir.mkdir()
    (config_dir / "mini.yaml").write_text(MINI_CONFIG)
    return config_dir


@pytest.fixture()
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv("SCENOFUZZ_OUTPUT_ROOT", str(root))
    monkeypatch.delenv("SCENOFUZZ_BRIDGE_ADDR", raising=False)
    return root


def run_cli(config_dir, *extra):
    return main(["--config-name", "mini", "--config-dir", str(config_dir),
                 *extra])


class TestArgumentHandling:
    def test_default_run_id_format(self):
        stamp = datetime(2026, 8, 16, 12, 34, 56, tzinfo=timezone.utc)
        assert default_run_id(7, stamp) == "20260816-123456-seed7"

    def test_missing_config_exits_config_code(self, tmp_path, capsys):
        rc = main(["--config-name", "nope", "--config-dir", str(tmp_path)])
        assert rc == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unknown_key_exits_config_code(self, tmp_path, capsys):
        config_dir = tmp_path / "configs"
        config_dir.mkdir()
        (config_dir / "mini.yaml").write_text(
            MINI_CONFIG + "    extra_knob: 1\n")
        rc = run_cli(config_dir)
        assert rc == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "extra_knob" in err

    def test_external_agent_without_endpoint_exits_config_code(
            self, tmp_path, output_root, capsys):
        config_dir = tmp_path / "configs"
        config_dir.mkdir()
        (config_dir / "mini.yaml").write_text(MINI_CONFIG + (
            "scenario_runner:\n"
            "  parameters:\n"
            "    agent:\n"
            "      type: external\n"))
        rc = run_cli(config_dir)
        assert rc == EXIT_CONFIG
        assert "endpoint" in capsys.readouterr().err


class TestCampaignRuns:
    def test_run_produces_output_tree(self, mini_config_dir, output_root,
                                      capsys):
        rc = run_cli(mini_config_dir, "--seed", "3", "--run-id", "runA",
                     "--max-evals", "4")
        assert rc == EXIT_OK
        run_dir = output_root / "runA"
        assert (run_dir / "report.json").exists()
        assert (run_dir / "campaign.state.json").exists()
        assert (run_dir / "evaluations.json").exists()
        assert (run_dir / "recordings" / "eval_000000.record.json").exists()

        entries = json.loads((run_dir / "evaluations.json").read_text())
        assert [e["index"] for e in entries] == [0, 1, 2, 3]
        report = json.loads((run_dir / "report.json").read_text())
        assert report["algorithm"] == "random"
        assert report["seed"] == 3
        assert report["evaluations"] == 4

        out = capsys.readouterr().out
        assert "algorithm=random seed=3 evaluations=4" in out
        assert f"output={run_dir}" in out

    def test_config_name_suffix_optional(self, mini_config_dir, output_root):
        rc = main(["--config-name", "mini.yaml",
                   "--config-dir", str(mini_config_dir),
                   "--run-id", "runSuffix", "--max-evals", "2"])
        assert rc == EXIT_OK
        assert (output_root / "runSuffix" / "report.json").exists()

    def test_worker_override_keeps_log_bytes(self, mini_config_dir,
                                             output_root):
        assert run_cli(mini_config_dir, "--run-id", "w1",
                       "--max-evals", "4") == EXIT_OK
        assert run_cli(mini_config_dir, "--run-id", "w2",
                       "--max-evals", "4", "--workers", "3") == EXIT_OK
        log1 = (output_root / "w1" / "evaluations.json").read_bytes()
        log2 = (output_root / "w2" / "evaluations.json").read_bytes()
        assert log1 == log2

    def test_resume_flag_extends_previous_run(self, mini_config_dir,
                                              output_root):
        assert run_cli(mini_config_dir, "--run-id", "whole",
                       "--max-evals", "6") == EXIT_OK
        assert run_cli(mini_config_dir, "--run-id", "split",
                       "--max-evals", "3") == EXIT_OK
        assert run_cli(mini_config_dir, "--run-id", "split", "--resume",
                       "--max-evals", "6") == EXIT_OK
        whole = (output_root / "whole" / "evaluations.json").read_bytes()
        split = (output_root / "split" / "evaluations.json").read_bytes()
        assert whole == split

    def test_svg_export_renders_violations(self, output_root, capsys):
        rc = main(["--config-name", "random", "--config-dir", str(CONFIG_DIR),
                   "--run-id", "svgrun", "--max-evals", "8", "--export-svg"])
        assert rc == EXIT_OK
        run_dir = output_root / "svgrun"
        report = json.loads((run_dir / "report.json").read_text())
        assert report["violations"] >= 1
        svgs = sorted((run_dir / "svg").glob("*.svg"))
        assert len(svgs) == report["violations"]
        body = svgs[0].read_text()
        assert body.startswith("<svg")
        assert "<circle" in body
        out = capsys.readouterr().out
        assert f"svgs={len(svgs)}" in out


class TestInterrupt:
    def test_sigint_checkpoints_and_resume_completes(self, tmp_path):
        output_root = tmp_path / "out"
        env = dict(os.environ,
                   PYTHONPATH=str(PACKAGE_ROOT / "src"),
                   SCENOFUZZ_OUTPUT_ROOT=str(output_root))
        env.pop("SCENOFUZZ_BRIDGE_ADDR", None)
        argv = [sys.executable, "-m", "scenofuzz.cli",
                "--config-name", "random", "--config-dir", str(CONFIG_DIR),
                "--run-id", "interrupted", "--max-evals", "40"]
        proc = subprocess.Popen(argv, env=env, cwd=tmp_path,
                                stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE)
        log_path = output_root / "interrupted" / "evaluations.json"
        deadline = time.monotonic() + 60.0
        while time.monotonic() < deadline:
            try:
                if len(json.loads(log_path.read_text())) >= 2:
                    break
            except (OSError, ValueError):
                pass
            time.sleep(0.02)
        else:
            proc.kill()
            pytest.fail("campaign never checkpointed")
        proc.send_signal(signal.SIGINT)
        proc.communicate(timeout=60)
        assert proc.returncode == EXIT_INTERRUPTED

        partial = json.loads(log_path.read_text())
        assert 2 <= len(partial) < 40

        env_patch = dict(env)
        os.environ["SCENOFUZZ_OUTPUT_ROOT"] = env_patch["SCENOFUZZ_OUTPUT_ROOT"]
        try:
            rc = main(["--config-name", "random",
                       "--config-dir", str(CONFIG_DIR),
                       "--run-id", "interrupted", "--resume",
                       "--max-evals", "40"])
            assert rc == EXIT_OK
            rc = main(["--config-name", "random",
                       "--config-dir", str(CONFIG_DIR),
                       "--run-id", "whole", "--max-evals", "40"])
            assert rc == EXIT_OK
        finally:
            os.environ.pop("SCENOFUZZ_OUTPUT_ROOT", None)

        resumed = (output_root / "interrupted" / "evaluations.json").read_bytes()
        whole = (output_root / "whole" / "evaluations.json").read_bytes()
        assert resumed == whole
