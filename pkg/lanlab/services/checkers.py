"""Assumption checkers run by the ``check`` subcommand.

Each checker looks at one assumption on the model or the signal and returns
a verdict dict ``{"passed": bool, "details": {...}}``. Checkers needing a
sample path share the one the context simulates lazily.
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..fisher import (
    assemble_fisher,
    check_fourier_invertibility,
    check_s5prime,
    fisher_forms,
    is_isotropic,
)
from ..models import check_ellipticity, covariance
from ..presets import Experiment
from ..signals import (
    check_gradient_consistency,
    check_l2_continuity,
    check_l2_differentiability,
    check_periodicity,
    estimate_holder_exponents,
    gram_matrix,
    is_linearly_independent,
)
from ..simulate import Trajectory, chain_diagnostics, grid_chain, simulate_external

logger = logging.getLogger(__name__)

MAX_ELLIPTICITY_SAMPLES = 2000


@dataclass
class CheckContext:
    """The resolved experiment plus a lazily simulated path."""

    experiment: Experiment
    seed: int = 0
    _path: Trajectory | None = field(default=None, repr=False)

    @property
    def horizon(self) -> float:
        return self.experiment.config.experiment.check_horizon

    def path(self) -> Trajectory:
        if self._path is None:
            exp = self.experiment
            logger.info(f"Simulating a check path over horizon {self.horizon}")
            self._path = simulate_external(
                exp.model,
                exp.signal,
                exp.parameter,
                exp.start.z,
                self.horizon,
                exp.config.experiment.step,
                self.seed,
            )
        return self._path


class EllipticityChecker:
    """Uniform ellipticity of sigma sigma^T on the states of the check path."""

    name = "ellipticity"

    def check(self, context: CheckContext) -> dict[str, Any]:
        z = context.path().z_block
        stride = max(1, z.shape[0] // MAX_ELLIPTICITY_SAMPLES)
        report = check_ellipticity(context.experiment.model, z[::stride], seed=context.seed)
        return {"passed": report.passed, "details": report.model_dump()}


class PeriodicityChecker:
    """1-periodicity of S_theta and consistency of its analytic derivatives."""

    name = "periodicity"

    def __init__(self, tolerance: float = 1e-10, derivative_tolerance: float = 1e-5):
        self.tolerance = tolerance
        self.derivative_tolerance = derivative_tolerance

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        grid = np.linspace(0.0, 1.0, 257)
        deviation = check_periodicity(exp.signal, exp.parameter.theta, grid)
        scale = max(float(np.max(np.abs(exp.signal.eval(exp.parameter.theta, grid)))), 1.0)
        gradients = check_gradient_consistency(exp.signal, exp.parameter.theta, grid)
        passed = (
            deviation <= self.tolerance * scale
            and gradients.theta_relative_error < self.derivative_tolerance
            and gradients.time_relative_error < self.derivative_tolerance
        )
        return {
            "passed": passed,
            "details": {"max_deviation": deviation, **gradients.model_dump()},
        }


class DifferentiabilityChecker:
    """L2-differentiability of (theta, T) -> S_(theta,T) over a few periods."""

    name = "differentiability"

    def __init__(self, periods: float = 10.0):
        self.periods = periods

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        report = check_l2_differentiability(
            exp.signal, exp.parameter, self.periods * exp.parameter.period
        )
        return {"passed": report.passed, "details": report.model_dump()}


class ContinuityChecker:
    """L2-continuity of the parameter derivative Sdot."""

    name = "continuity"

    def __init__(self, periods: float = 10.0):
        self.periods = periods

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        report = check_l2_continuity(exp.signal, exp.parameter, self.periods * exp.parameter.period)
        return {"passed": report.passed, "details": report.model_dump()}


class HolderChecker:
    """Fitted local Hoelder exponents of D_theta S in T."""

    name = "holder"

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        period = exp.parameter.period
        fit = estimate_holder_exponents(
            exp.signal,
            exp.parameter.theta,
            period,
            t_grid=[2 * period, 4 * period, 8 * period],
            dT_grid=[1e-2 * period, 3e-3 * period, 1e-3 * period],
        )
        return {"passed": fit.within_bounds, "details": fit.model_dump()}


class GramChecker:
    """Linear independence of d_theta S and S' in L2([0, 1])."""

    name = "gram"

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        gram = gram_matrix(exp.signal, exp.parameter.theta)
        eigenvalues = np.linalg.eigvalsh(gram)
        return {
            "passed": is_linearly_independent(exp.signal, exp.parameter.theta),
            "details": {"min_eigenvalue": float(eigenvalues[0]), "gram": gram.tolist()},
        }


class FisherInvertibilityChecker:
    """Invertibility of I(t) and I'(t) estimated from the check path."""

    name = "fisher-invertibility"

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        t = exp.config.experiment.fisher_t
        forms = fisher_forms(context.path(), exp.model, exp.signal, exp.parameter)
        report = check_s5prime(
            assemble_fisher(forms, exp.parameter, t),
            assemble_fisher(forms, exp.parameter, t, derivative=True),
        )
        return {"passed": report.passed, "details": report.model_dump()}


class FourierInequalityChecker:
    """Closed-form invertibility inequalities of the orthonormal Fourier expansion."""

    name = "fourier-inequalities"

    def check(self, context: CheckContext) -> dict[str, Any]:
        exp = context.experiment
        preset = exp.config.signal.preset
        theta = exp.parameter.theta
        if preset == "sine":
            # sin-only expansion; both sides are homogeneous in theta
            theta = np.concatenate([theta, np.zeros_like(theta)])
        elif preset != "fourier-expansion":
            return {"passed": True, "skipped": True, "details": {"reason": f"{preset} signal"}}
        if not exp.model.constant_volatility:
            return {"passed": True, "skipped": True, "details": {"reason": "state-dependent volatility"}}
        cov = covariance(exp.model, exp.start.z[None, :])[0]
        if not is_isotropic(cov):
            return {"passed": True, "skipped": True, "details": {"reason": "anisotropic volatility"}}
        report = check_fourier_invertibility(theta, covariance=cov)
        return {"passed": report.passed, "details": report.model_dump()}


class ChainChecker:
    """Mixing heuristics of the grid chain Z_0, Z_T, Z_2T, ..."""

    name = "grid-chain"

    def __init__(self, zscore_limit: float = 4.0):
        self.zscore_limit = zscore_limit

    def check(self, context: CheckContext) -> dict[str, Any]:
        chain = grid_chain(context.path(), context.experiment.parameter)
        report = chain_diagnostics(chain)
        passed = all(abs(z) < self.zscore_limit for z in report.half_mean_zscore)
        return {"passed": passed, "details": report.model_dump()}


def default_checkers() -> list[Any]:
    return [
        EllipticityChecker(),
        PeriodicityChecker(),
        DifferentiabilityChecker(),
        ContinuityChecker(),
        HolderChecker(),
        GramChecker(),
        FisherInvertibilityChecker(),
        FourierInequalityChecker(),
        ChainChecker(),
    ]
