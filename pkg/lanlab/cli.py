"""Command-line entry point: ``python -m lanlab <subcommand> --config FILE``."""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from .config import OUTPUT_FORMATS, Settings, get_settings, load_experiment
from .errors import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, ConfigurationError, InvariantViolationError, LanLabError
from .fisher import (
    assemble_fisher,
    check_fourier_invertibility,
    check_s5prime,
    constant_volatility_oracle,
    fisher_forms,
    integration_gap,
    is_isotropic,
)
from .lan import (
    lan_decomposition,
    mle_joint,
    rate_experiment,
    remainder_decay_experiment,
    score_covariance_experiment,
)
from .likelihood import log_likelihood_terms
from .models import covariance
from .presets import Experiment
from .reconstruct import reconstruct_yz
from .services.check_service import CheckService
from .services.checkers import CheckContext, default_checkers
from .services.protocols import ReplicationRunner
from .services.replication_service import available_workers, make_runner
from .services.report_service import ReportService
from .simulate import Trajectory, degeneracy_gap, simulate_external, simulate_full
from .storage import read_trajectory

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "simulate",
    "reconstruct",
    "loglik",
    "fisher",
    "lan",
    "score-cov",
    "remainder",
    "mle",
    "rates",
    "check",
)


def configure_logging() -> None:
    """Configure logging level from settings."""
    try:
        settings = get_settings()
        log_level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
        logging.basicConfig(
            level=log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            force=True,  # Override any existing config
        )
        logger.debug(f"Logging configured with level: {settings.LOG_LEVEL.upper()}")
    except Exception as e:
        # Fallback to INFO if settings fail
        logging.basicConfig(level=logging.INFO)
        logger.warning(f"Failed to load LOG_LEVEL from settings, using INFO: {e}")


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanlab",
        description="Simulation, likelihood and LAN experiments for degenerate diffusions "
        "with periodic input.",
    )
    parser.add_argument("command", choices=SUBCOMMANDS, help="Experiment to run")
    parser.add_argument("--config", type=Path, required=True, help="Experiment YAML file")
    parser.add_argument("--seed", type=int, default=0, help="Experiment seed (default: 0)")
    parser.add_argument(
        "--out-dir",
        type=Path,
        default=settings.OUT_DIR,
        help=f"Root of the run directories (default: {settings.OUT_DIR})",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=settings.WORKERS,
        help="Replication worker pool size (default: available cores)",
    )
    parser.add_argument(
        "--format",
        dest="fmt",
        choices=OUTPUT_FORMATS,
        default=settings.DEFAULT_FORMAT,
        help=f"Trajectory and row format (default: {settings.DEFAULT_FORMAT})",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a config value; may be repeated",
    )
    return parser


class RunContext:
    """Everything a subcommand handler needs."""

    def __init__(self, experiment: Experiment, args: argparse.Namespace):
        self.experiment = experiment
        self.args = args
        self.reports = get_report_service(experiment, args)
        self._runner: ReplicationRunner | None = None

    @property
    def seed(self) -> int:
        return int(self.args.seed)

    @property
    def runner(self) -> ReplicationRunner:
        if self._runner is None:
            self._runner = get_runner(self.args.workers)
        return self._runner


def get_runner(workers: int | None) -> ReplicationRunner:
    """Create the replication runner; all parallelism lives here."""
    size = workers or available_workers()
    logger.info(f"Using {size} replication worker(s)")
    return make_runner(size)


def get_report_service(experiment: Experiment, args: argparse.Namespace) -> ReportService:
    return ReportService(args.out_dir, experiment.config, args.seed, args.fmt)


def get_check_service() -> CheckService:
    """Create CheckService with the default checkers."""
    return CheckService(checkers=default_checkers())


def _observed_z(ctx: RunContext, horizon: float) -> Trajectory:
    """Z-path from the configured trajectory file, else simulated under the parameter.

    A file holding only X is turned into a Z-path by reconstruction.
    """
    exp = ctx.experiment
    source = exp.config.experiment.trajectory
    if source is None:
        return simulate_external(
            exp.model,
            exp.signal,
            exp.parameter,
            exp.start.z,
            horizon,
            exp.config.experiment.step,
            ctx.seed,
        )
    traj = read_trajectory(source)
    if traj.columns("Z"):
        return traj.z_only()
    if traj.columns("X"):
        logger.info(f"{source} holds no Z columns; reconstructing from X")
        return reconstruct_yz(exp.model, traj.select("X"), exp.start).z_only()
    raise ConfigurationError(f"{source} has neither Z nor X columns", labels=list(traj.labels))


def _reference_fisher(ctx: RunContext) -> Any:
    exp = ctx.experiment
    if exp.config.experiment.reference == "ergodic":
        return None
    if not exp.model.constant_volatility:
        raise ConfigurationError("the oracle Fisher matrix needs a constant volatility model")
    cov = covariance(exp.model, exp.start.z[None, :])[0]
    return constant_volatility_oracle(exp.signal, exp.parameter, cov, t=1.0)


def cmd_simulate(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    traj = simulate_full(
        exp.model,
        exp.signal,
        exp.parameter,
        exp.start,
        cfg.horizon,
        cfg.step,
        ctx.seed,
        clamp_tolerance=cfg.clamp_tolerance,
    )
    path = ctx.reports.write_trajectory(traj, "trajectory")
    return {
        "trajectory": str(path),
        "n_steps": traj.n_steps,
        "horizon": traj.horizon,
        "labels": list(traj.labels),
        "degeneracy_gap": degeneracy_gap(exp.model, traj),
    }


def cmd_reconstruct(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    if cfg.trajectory is not None:
        truth = read_trajectory(cfg.trajectory)
    else:
        truth = simulate_full(
            exp.model, exp.signal, exp.parameter, exp.start, cfg.horizon, cfg.step, ctx.seed,
            clamp_tolerance=cfg.clamp_tolerance,
        )
    rebuilt = reconstruct_yz(exp.model, truth.select("X"), exp.start, cfg.clamp_tolerance)
    path = ctx.reports.write_trajectory(rebuilt, "reconstructed")
    result: dict[str, Any] = {"trajectory": str(path), "n_steps": rebuilt.n_steps}
    if truth.columns("Z") and truth.values.shape == rebuilt.values.shape:
        result["sup_error_y"] = float(np.max(np.abs(rebuilt.y_block - truth.y_block), initial=0.0))
        result["sup_error_z"] = float(np.max(np.abs(rebuilt.z_block - truth.z_block)))
        result["error_bound"] = 10 * truth.step * (1 + truth.horizon)
    return result


def cmd_loglik(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    z_traj = _observed_z(ctx, exp.config.experiment.horizon)
    terms = log_likelihood_terms(z_traj, exp.model, exp.signal, exp.alternative, exp.parameter)
    return {
        "p_alt": exp.alternative.to_dict(),
        "p_ref": exp.parameter.to_dict(),
        "horizon": z_traj.horizon,
        **terms.model_dump(),
    }


def cmd_fisher(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    z_traj = _observed_z(ctx, cfg.fisher_horizon or cfg.horizon)
    p, t = exp.parameter, cfg.fisher_t
    forms = fisher_forms(z_traj, exp.model, exp.signal, p, cfg.fisher_horizon)
    fisher = assemble_fisher(forms, p, t)
    derivative = assemble_fisher(forms, p, t, derivative=True)
    invertibility = check_s5prime(fisher, derivative)
    result: dict[str, Any] = {
        "forms": forms.to_dict(),
        "fisher": fisher.to_dict(),
        "derivative": derivative.to_dict(),
        "integration_gap": integration_gap(forms, p, t),
        "invertibility": {**invertibility.model_dump(), "passed": invertibility.passed},
    }
    if not exp.model.constant_volatility:
        return result
    cov = covariance(exp.model, exp.start.z[None, :])[0]
    preset = exp.config.signal.preset
    if preset in ("sine", "fourier-expansion") and is_isotropic(cov):
        theta = p.theta if preset == "fourier-expansion" else np.concatenate([p.theta, 0 * p.theta])
        inequalities = check_fourier_invertibility(theta, covariance=cov)
        result["fourier_inequalities"] = {**inequalities.model_dump(), "passed": inequalities.passed}
    result["oracle"] = constant_volatility_oracle(exp.signal, p, cov, t).to_dict()
    return result


def cmd_lan(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    n = exp.config.experiment.n
    z_traj = _observed_z(ctx, n)
    decomposition = lan_decomposition(
        z_traj, exp.model, exp.signal, exp.parameter, exp.local_direction, n,
        fisher=_reference_fisher(ctx),
    )
    return decomposition.model_dump()


def cmd_score_cov(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    report = score_covariance_experiment(
        exp.model, exp.signal, exp.parameter, cfg.n, cfg.replications, ctx.seed,
        runner=ctx.runner, z0=exp.start.z, step=cfg.step, reference=_reference_fisher(ctx),
    )
    ctx.reports.write_rows("score_cov_rows", report.rows)
    ctx.reports.write_report("score-cov", report)
    if not (report.mean_within_3se and report.covariance_within_3se):
        raise InvariantViolationError(
            "score moments are outside the 3 SE band",
            mean_within_3se=report.mean_within_3se,
            covariance_within_3se=report.covariance_within_3se,
        )
    return report.model_dump()


def cmd_remainder(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    report = remainder_decay_experiment(
        exp.model, exp.signal, exp.parameter, exp.local_direction, cfg.n_list, cfg.replications,
        ctx.seed, runner=ctx.runner, z0=exp.start.z, step=cfg.step,
        reference=_reference_fisher(ctx),
    )
    ctx.reports.write_rows("remainder_rows", report.rows)
    ctx.reports.write_report("remainder", report)
    if not report.monotone_decrease:
        raise InvariantViolationError(
            "remainder medians do not decrease", medians=[r.median_abs for r in report.table]
        )
    return report.model_dump()


def cmd_mle(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    z_traj = _observed_z(ctx, cfg.n)
    _, report = mle_joint(z_traj, exp.model, exp.signal, exp.parameter, cfg.search)
    return {"truth": exp.parameter.to_dict(), **report.model_dump()}


def cmd_rates(ctx: RunContext) -> dict[str, Any]:
    exp = ctx.experiment
    cfg = exp.config.experiment
    report = rate_experiment(
        exp.model, exp.signal, exp.parameter, cfg.n_list, cfg.replications, ctx.seed,
        runner=ctx.runner, z0=exp.start.z, step=cfg.step, search=cfg.search,
        reference=_reference_fisher(ctx),
    )
    ctx.reports.write_rows("rate_rows", report.rows)
    return report.model_dump()


def cmd_check(ctx: RunContext) -> dict[str, Any]:
    report = get_check_service().run(CheckContext(ctx.experiment, ctx.seed))
    ctx.reports.write_report("check", {**report.model_dump(), "passed": report.passed})
    print(report.table())
    if not report.passed:
        raise InvariantViolationError(
            "assumption checks failed", failed=[v.name for v in report.verdicts if not v.passed]
        )
    return report.model_dump()


HANDLERS: dict[str, Callable[[RunContext], dict[str, Any]]] = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "loglik": cmd_loglik,
    "fisher": cmd_fisher,
    "lan": cmd_lan,
    "score-cov": cmd_score_cov,
    "remainder": cmd_remainder,
    "mle": cmd_mle,
    "rates": cmd_rates,
    "check": cmd_check,
}

# handlers that write their own report before asserting on it
SELF_REPORTING = {"score-cov", "remainder", "check"}


def run(config_path: Path, command: str, overrides: Sequence[str], args: argparse.Namespace) -> int:
    """Execute one subcommand and write its artifacts."""
    if args.workers is not None and args.workers < 1:
        raise ConfigurationError(f"--workers must be at least 1, got {args.workers}")
    experiment = Experiment(load_experiment(config_path, list(overrides)))
    ctx = RunContext(experiment, args)
    logger.info(f"Running {command} in {ctx.reports.run_dir}")
    result = HANDLERS[command](ctx)
    if command not in SELF_REPORTING:
        ctx.reports.write_report(command, result)
    if command != "check":
        print(json.dumps({"run_dir": str(ctx.reports.run_dir), "command": command}, sort_keys=True))
    return EXIT_OK


def _fail(payload: dict[str, Any], code: int) -> int:
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    try:
        settings = get_settings()
    except ValidationError as e:
        return _fail(
            {"error": "ConfigurationError", "message": f"invalid settings: {e}", "exit_code": EXIT_USAGE},
            EXIT_USAGE,
        )
    args = build_parser(settings).parse_args(argv)
    try:
        return run(args.config, args.command, args.overrides, args)
    except LanLabError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return _fail(e.to_dict(), e.exit_code)
    except ValueError as e:
        logger.error(f"{args.command} rejected its input: {e}")
        return _fail(
            {"error": e.__class__.__name__, "message": str(e), "exit_code": EXIT_USAGE}, EXIT_USAGE
        )
    except Exception as e:
        logger.exception(f"{args.command} crashed")
        return _fail(
            {"error": e.__class__.__name__, "message": str(e), "exit_code": EXIT_FAILURE},
            EXIT_FAILURE,
        )
