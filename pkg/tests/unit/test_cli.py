"""Unit tests for the command-line entry point."""

import json
from pathlib import Path
from typing import Any

import pytest
import yaml
from pytest_mock import MockerFixture

from lanlab.cli import build_parser, main
from lanlab.config import Settings
from lanlab.errors import EXIT_FAILURE, EXIT_OK, EXIT_USAGE
from lanlab.storage import read_trajectory


@pytest.fixture
def config_file(tmp_path: Path, benchmark_document: dict[str, Any], monkeypatch: pytest.MonkeyPatch) -> Path:
    for name in ("LANLAB_LOG_LEVEL", "LANLAB_WORKERS", "LANLAB_OUT_DIR", "LANLAB_DEFAULT_FORMAT"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "benchmark.yaml"
    path.write_text(yaml.safe_dump(benchmark_document), encoding="utf-8")
    return path


def _invoke(config: Path, command: str, *extra: str) -> int:
    return main([command, "--config", str(config), "--out-dir", str(config.parent / "runs"), *extra])


def _run_dir(capsys: pytest.CaptureFixture[str]) -> Path:
    line = capsys.readouterr().out.strip().splitlines()[-1]
    return Path(json.loads(line)["run_dir"])


@pytest.mark.unit
class TestParser:
    def test_defaults_come_from_settings(self) -> None:
        settings = Settings(WORKERS=2, DEFAULT_FORMAT="bin")

        args = build_parser(settings).parse_args(["fisher", "--config", "x.yaml"])

        assert args.workers == 2
        assert args.fmt == "bin"
        assert args.seed == 0
        assert args.overrides == []

    def test_repeated_overrides(self) -> None:
        args = build_parser(Settings()).parse_args(
            ["lan", "--config", "x.yaml", "--set", "experiment.n=5", "--set", "experiment.step=0.1"]
        )

        assert args.overrides == ["experiment.n=5", "experiment.step=0.1"]

    def test_unknown_subcommand(self) -> None:
        with pytest.raises(SystemExit) as exc_info:
            build_parser(Settings()).parse_args(["estimate", "--config", "x.yaml"])

        assert exc_info.value.code == 2


@pytest.mark.unit
class TestMain:
    """Exit codes and artifacts of single runs."""

    def test_missing_config(self, config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = _invoke(config_file.parent / "absent.yaml", "simulate")

        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert code == EXIT_USAGE
        assert error["error"] == "ConfigurationError"

    def test_non_positive_horizon(self, config_file: Path) -> None:
        assert _invoke(config_file, "simulate", "--set", "experiment.horizon=0") == EXIT_USAGE

    def test_non_positive_workers(self, config_file: Path) -> None:
        assert _invoke(config_file, "score-cov", "--workers", "0") == EXIT_USAGE

    def test_mismatched_theta(self, config_file: Path) -> None:
        assert _invoke(config_file, "fisher", "--set", "parameter.theta=[1, 2]") == EXIT_USAGE

    def test_truncated_binary_trajectory(
        self, config_file: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        truncated = config_file.parent / "short.lantraj"
        truncated.write_bytes(b"LANTRAJ1\x05\x00")

        code = _invoke(config_file, "lan", "--set", f"experiment.trajectory={truncated}")

        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert code == EXIT_USAGE
        assert error["error"] == "ConfigurationError"

    def test_simulate_writes_the_trajectory(
        self, config_file: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = _invoke(config_file, "simulate", "--seed", "5", "--set", "experiment.horizon=2")

        run_dir = _run_dir(capsys)
        report = json.loads((run_dir / "simulate.json").read_text())
        assert code == EXIT_OK
        assert run_dir.name.endswith("-seed5")
        assert report["result"]["labels"] == ["X1", "Z1"]
        assert report["result"]["degeneracy_gap"] < 1e-12
        assert read_trajectory(run_dir / "trajectory.csv").n_steps == 200

    def test_same_seed_same_run(self, config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        _invoke(config_file, "simulate", "--set", "experiment.horizon=1", "--format", "json")
        first = (_run_dir(capsys) / "trajectory.json").read_text()
        _invoke(config_file, "simulate", "--set", "experiment.horizon=1", "--format", "json")
        again = (_run_dir(capsys) / "trajectory.json").read_text()

        assert first == again

    def test_fisher_report(self, config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = _invoke(config_file, "fisher")

        result = json.loads((_run_dir(capsys) / "fisher.json").read_text())["result"]
        assert code == EXIT_OK
        assert result["invertibility"]["passed"]
        assert result["fourier_inequalities"]["passed"]
        assert result["oracle"]["entries"][0][0] == pytest.approx(0.5)
        assert result["integration_gap"] < 1e-10

    def test_loglik_report(self, config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = _invoke(config_file, "loglik")

        result = json.loads((_run_dir(capsys) / "loglik.json").read_text())["result"]
        assert code == EXIT_OK
        assert result["log_ratio"] == pytest.approx(result["stochastic"] - result["quadratic"])
        assert result["p_alt"]["period"] == 1.001

    def test_lan_from_an_x_only_file(
        self, config_file: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        _invoke(config_file, "simulate", "--set", "experiment.horizon=20")
        trajectory = _run_dir(capsys) / "trajectory.csv"
        lines = trajectory.read_text().splitlines()
        header = lines[0].split(",")
        keep = [i for i, name in enumerate(header) if name in ("time", "X1")]
        x_only = config_file.parent / "x_only.csv"
        x_only.write_text(
            "\n".join(",".join(line.split(",")[i] for i in keep) for line in lines) + "\n"
        )

        code = _invoke(config_file, "lan", "--set", f"experiment.trajectory={x_only}")

        result = json.loads((_run_dir(capsys) / "lan.json").read_text())["result"]
        assert code == EXIT_OK
        assert result["n"] == 20.0

    def test_unexpected_errors_exit_one(
        self, config_file: Path, mocker: MockerFixture, capsys: pytest.CaptureFixture[str]
    ) -> None:
        mocker.patch.dict("lanlab.cli.HANDLERS", {"fisher": mocker.Mock(side_effect=RuntimeError("boom"))})

        code = _invoke(config_file, "fisher")

        assert code == EXIT_FAILURE
        assert "boom" in capsys.readouterr().err
