"""Unit tests for service layer."""

import csv
import json
import math
from pathlib import Path
from typing import Any
from unittest.mock import Mock

import numpy as np
import pytest
from pytest_mock import MockerFixture

from lanlab.config import load_document
from lanlab.presets import Experiment
from lanlab.services.check_service import CheckReport, CheckService, Verdict
from lanlab.services.checkers import (
    CheckContext,
    DifferentiabilityChecker,
    EllipticityChecker,
    FourierInequalityChecker,
    GramChecker,
    PeriodicityChecker,
    default_checkers,
)
from lanlab.services.replication_service import (
    ProcessPoolRunner,
    SequentialRunner,
    available_workers,
    make_runner,
)
from lanlab.services.report_service import ReportService
from lanlab.signals import SignalModel
from lanlab.simulate import Trajectory
from lanlab.storage import read_trajectory
from tests.fixtures import experiments


def _square(x: int) -> int:
    return x * x


@pytest.mark.unit
class TestCheckService:
    """Tests for CheckService."""

    @pytest.fixture
    def mock_checkers(self) -> list[Mock]:
        """Create mock checkers."""
        passing = Mock()
        passing.name = "passing"
        passing.check.return_value = {"passed": True, "details": {"value": 1.0}}

        skipped = Mock()
        skipped.name = "skipped"
        skipped.check.return_value = {"passed": True, "skipped": True}

        return [passing, skipped]

    def test_run_collects_verdicts(self, mock_checkers: list[Mock]) -> None:
        context = object()

        report = CheckService(mock_checkers).run(context)

        mock_checkers[0].check.assert_called_once_with(context)
        assert [v.name for v in report.verdicts] == ["passing", "skipped"]
        assert report.verdicts[0].details == {"value": 1.0}
        assert report.verdicts[1].skipped
        assert report.passed

    def test_run_handles_checker_failure(self, mock_checkers: list[Mock]) -> None:
        """A raising checker becomes a failed verdict; the rest still run."""
        broken = Mock()
        broken.name = "broken"
        broken.check.side_effect = RuntimeError("quadrature exploded")

        report = CheckService([broken, *mock_checkers]).run(object())

        assert len(report.verdicts) == 3
        assert report.verdicts[0].error == "quadrature exploded"
        assert not report.passed
        assert mock_checkers[1].check.call_count == 1

    def test_missing_passed_key_fails(self) -> None:
        vague = Mock()
        vague.name = "vague"
        vague.check.return_value = {"details": {}}

        report = CheckService([vague]).run(object())

        assert not report.passed

    def test_table(self) -> None:
        report = CheckReport(
            verdicts=[
                Verdict(name="gram", passed=True),
                Verdict(name="holder", passed=False, error="bad fit"),
                Verdict(name="fourier-inequalities", passed=True, skipped=True),
            ]
        )

        lines = report.table().splitlines()

        assert lines[0].startswith("check")
        assert lines[1].split() == ["gram", "pass"]
        assert "FAIL" in lines[2] and "(bad fit)" in lines[2]
        assert lines[3].split() == ["fourier-inequalities", "skip"]


@pytest.mark.unit
class TestCheckers:
    """Checkers against the resolved benchmark."""

    @pytest.fixture
    def context(self, benchmark_document: dict[str, Any]) -> CheckContext:
        return CheckContext(Experiment(load_document(benchmark_document)), seed=3)

    def test_path_is_simulated_once(self, context: CheckContext) -> None:
        first = context.path()

        assert context.path() is first
        assert first.horizon == pytest.approx(20.0)

    def test_benchmark_passes_signal_checks(self, context: CheckContext) -> None:
        assert PeriodicityChecker().check(context)["passed"]
        assert GramChecker().check(context)["passed"]
        assert EllipticityChecker().check(context)["passed"]

    def test_differentiability_on_the_benchmark(self, context: CheckContext) -> None:
        verdict = DifferentiabilityChecker().check(context)

        assert verdict["passed"]

    def test_differentiability_fails_on_a_wrong_gradient(
        self, context: CheckContext, perturbed_sine: SignalModel
    ) -> None:
        context.experiment.signal = perturbed_sine

        verdict = DifferentiabilityChecker().check(context)

        assert not verdict["passed"]

    def test_fourier_inequalities_on_sine(self, context: CheckContext) -> None:
        verdict = FourierInequalityChecker().check(context)

        assert verdict["passed"]
        assert "skipped" not in verdict

    def test_fourier_inequalities_skip_anisotropic_noise(
        self, context: CheckContext, mocker: MockerFixture
    ) -> None:
        mocker.patch(
            "lanlab.services.checkers.covariance", return_value=np.array([[[1.0, 0.0], [0.0, 2.0]]])
        )

        verdict = FourierInequalityChecker().check(context)

        assert verdict["skipped"]
        assert verdict["details"]["reason"] == "anisotropic volatility"

    def test_fourier_inequalities_skip_other_tables(self) -> None:
        context = CheckContext(Experiment(load_document(experiments.rotor_chain())))

        verdict = FourierInequalityChecker().check(context)

        assert verdict["skipped"]

    def test_default_checkers_have_unique_names(self) -> None:
        names = [checker.name for checker in default_checkers()]

        assert len(names) == len(set(names)) == 9


@pytest.mark.unit
class TestReplicationRunners:
    def test_sequential_runner(self) -> None:
        runner = SequentialRunner()

        assert runner.workers == 1
        assert runner.map(_square, [1, 2, 3]) == [1, 4, 9]

    def test_make_runner(self) -> None:
        assert isinstance(make_runner(1), SequentialRunner)
        assert make_runner(4).workers == 4
        assert make_runner(None).workers == available_workers()
        with pytest.raises(ValueError):
            make_runner(0)

    def test_pool_keeps_job_order(self) -> None:
        runner = ProcessPoolRunner(workers=2)

        assert runner.map(_square, range(6)) == [0, 1, 4, 9, 16, 25]


@pytest.mark.unit
class TestReportService:
    """Tests for ReportService."""

    @pytest.fixture
    def service(self, tmp_path: Path, benchmark_document: dict[str, Any]) -> ReportService:
        return ReportService(tmp_path, load_document(benchmark_document), seed=42)

    def test_run_name(self, service: ReportService) -> None:
        name = service.run_name(service.config, 42)

        assert name == f"{service.config.digest()[:12]}-seed42"
        assert service.run_dir.name == name

    def test_write_report_embeds_config(self, service: ReportService) -> None:
        path = service.write_report("fisher", {"value": 1.5, "spread": math.nan})

        document = json.loads(path.read_text())
        assert path.name == "fisher.json"
        assert document["seed"] == 42
        assert document["config"]["signal"]["preset"] == "sine"
        assert document["result"] == {"value": 1.5, "spread": None}

    def test_write_rows_csv(self, service: ReportService) -> None:
        rows = [{"replication": 0, "n": 10.0}, {"replication": 1, "n": 10.0, "error": "flat"}]

        path = service.write_rows("rates", rows)

        assert path is not None and path.suffix == ".csv"
        with path.open(newline="") as handle:
            table = list(csv.reader(handle))
        assert table[0] == ["replication", "n", "error"]
        assert table[1] == ["0", "10.0", ""]

    def test_write_rows_json(self, tmp_path: Path, benchmark_document: dict[str, Any]) -> None:
        service = ReportService(tmp_path, load_document(benchmark_document), seed=1, fmt="json")

        path = service.write_rows("score_cov", [{"score_T": math.inf}])

        assert path is not None
        assert json.loads(path.read_text()) == [{"score_T": None}]

    def test_no_rows(self, service: ReportService) -> None:
        assert service.write_rows("empty", []) is None
        assert not service.run_dir.exists()

    def test_write_trajectory(self, service: ReportService, benchmark_path: Trajectory) -> None:
        path = service.write_trajectory(benchmark_path.truncate(1.0), "trajectory")

        assert path.parent == service.run_dir
        assert read_trajectory(path).n_steps == 100
