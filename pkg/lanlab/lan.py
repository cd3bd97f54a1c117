"""Local asymptotic normality of the Z-experiment.

Local parameters, the decomposition of the log-likelihood ratio into score,
quadratic term and remainder, the joint (theta, T) maximum-likelihood
estimator, and the Monte Carlo experiments that check the weak limit of the
score, the decay of the remainder and the n^-1/2 / n^-3/2 rates.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, stats

from .arrays import ArrayLike, FloatArray, as_vector
from .errors import LanLabError, NonIdentifiableError, UsageError
from .fisher import FisherMatrix, fisher_matrix
from .likelihood import inverse_covariance, local_scale, log_likelihood_ratio, score_statistic
from .models import DiffusionModel
from .services.protocols import ReplicationRunner
from .services.replication_service import SequentialRunner
from .signals import ParamPoint, SignalModel, is_affine_in_theta
from .simulate import DEFAULT_STEP, Trajectory, simulate_external

logger = logging.getLogger(__name__)

MIN_REPLICATIONS = 100


def parameter_labels(dim_theta: int) -> list[str]:
    return [f"theta{i + 1}" for i in range(dim_theta)] + ["T"]


def local_parameter(p: ParamPoint, h: ArrayLike, n: float) -> ParamPoint:
    """(theta, T) + delta_n h."""
    vec = as_vector(h, "h")
    if vec.size != p.dim_theta + 1:
        raise ValueError(f"h has {vec.size} components, expected {p.dim_theta + 1}")
    moved = p.as_vector() + local_scale(n, p.dim_theta) * vec
    if not moved[-1] > 0:
        raise ValueError(f"local parameter has non-positive period {moved[-1]}")
    return ParamPoint.from_vector(moved)


class LanDecomposition(BaseModel):
    """log_lr = linear_term - quadratic_term + remainder."""

    log_lr: float
    linear_term: float
    quadratic_term: float
    remainder: float
    n: float
    h: list[float]


def lan_decomposition(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    h: ArrayLike,
    n: float,
    fisher: FisherMatrix | None = None,
) -> LanDecomposition:
    """Split the log-likelihood ratio of p + delta_n h against p.

    Args:
        z_traj: Path simulated under ``p`` with horizon at least ``n``.
        model: External dynamics.
        signal: Signal family.
        p: Reference parameter.
        h: Local parameter in R^(D+1).
        n: Horizon.
        fisher: I(1); defaults to the ergodic estimate from this path over [0, n].

    Returns:
        The decomposition with the remainder obtained by subtraction.
    """
    vec = as_vector(h, "h")
    path = z_traj.truncate(n)
    p_local = local_parameter(p, vec, n)
    if fisher is None:
        fisher = fisher_matrix(path, model, signal, p, t=1.0)
    log_lr = log_likelihood_ratio(path, model, signal, p_local, p)
    linear_term = float(vec @ score_statistic(path, model, signal, p, n))
    quadratic_term = 0.5 * fisher.quadratic(vec)
    remainder = log_lr - linear_term + quadratic_term
    return LanDecomposition(
        log_lr=log_lr,
        linear_term=linear_term,
        quadratic_term=quadratic_term,
        remainder=remainder,
        n=n,
        h=vec.tolist(),
    )


class SearchConfig(BaseModel):
    """Search settings of the joint estimator."""

    model_config = ConfigDict(extra="forbid")

    half_width: float | None = Field(
        default=None, gt=0, description="Half-width of the T-window; default 10 T^2 n^-3/2"
    )
    nodes: int | None = Field(
        default=None, ge=3, description="T-grid nodes; default resolves n^-3/2 T^2 / 10"
    )
    max_nodes: int = Field(default=2001, ge=3, description="Cap on the default node count")
    xtol: float = Field(default=1e-10, gt=0, description="Golden-section tolerance")
    flat_tolerance: float = Field(
        default=1e-12, ge=0, description="Relative spread below which the grid is flat"
    )

    def window(self, period: float, n: float) -> tuple[float, float, int]:
        """Lower and upper end of the T-window and its node count."""
        half_width = self.half_width or 10.0 * period**2 * n**-1.5
        lower = max(period - half_width, 1e-3 * period)
        upper = period + half_width
        nodes = self.nodes or min(
            self.max_nodes, math.ceil(2 * half_width * n**1.5 * 10 / period**2) + 1
        )
        return lower, upper, max(nodes, 3)


class ProfileLikelihood:
    """log-likelihood ratio against a fixed reference as a function of (theta, T).

    Path quantities that do not depend on the parameter (increments with
    b(Z) h removed, (sigma sigma^T)^-1) are computed once.
    """

    def __init__(
        self, z_traj: Trajectory, model: DiffusionModel, signal: SignalModel, p_ref: ParamPoint
    ):
        z = z_traj.z_block
        if z.shape[0] < 2:
            raise ValueError("the likelihood needs at least one increment")
        self.signal = signal
        self.p_ref = p_ref
        self.step = z_traj.step
        self.times = z_traj.times[:-1]
        self.dim_n = z.shape[1]
        self.reduced = np.diff(z, axis=0) - model.b(z[:-1]) * self.step
        self.inverse, _ = inverse_covariance(model, z[:-1])
        self.evaluations = 0
        self.is_linear = is_affine_in_theta(signal, p_ref.theta)
        self._reference = self._log_density(p_ref.theta, p_ref.period)

    def _signal(self, theta: FloatArray, period: float) -> FloatArray:
        return self.signal.eval(theta, self.times / period).reshape(-1, self.dim_n)  # type: ignore[no-any-return]

    def _log_density(self, theta: FloatArray, period: float) -> float:
        values = self._signal(theta, period)
        weighted = np.einsum("kij,kj->ki", self.inverse, values)
        return float(np.sum(weighted * self.reduced)) - 0.5 * self.step * float(
            np.sum(weighted * values)
        )

    def value(self, theta: ArrayLike, period: float) -> float:
        self.evaluations += 1
        return self._log_density(as_vector(theta, "theta"), period) - self._reference

    def gradient_theta(self, theta: ArrayLike, period: float) -> FloatArray:
        vec = as_vector(theta, "theta")
        phase = self.times / period
        residual = self.reduced - self._signal(vec, period) * self.step
        grad = self.signal.grad_theta(vec, phase)
        return np.einsum("knd,knm,km->d", grad, self.inverse, residual)  # type: ignore[no-any-return]

    def normal_equations(self, period: float) -> tuple[FloatArray, FloatArray]:
        """A and r of A theta = r for signals affine in theta."""
        zero = np.zeros(self.p_ref.dim_theta)
        phase = self.times / period
        basis = self.signal.grad_theta(zero, phase)
        offset = self._signal(zero, period)
        weighted = np.einsum("kij,kjd->kid", self.inverse, basis)
        a = self.step * np.einsum("knd,kne->de", basis, weighted)
        r = np.einsum("knd,kn->d", weighted, self.reduced - offset * self.step)
        return a, r

    def theta_hat(self, period: float, start: ArrayLike | None = None) -> FloatArray:
        """Maximiser over theta at fixed T."""
        if self.is_linear:
            a, r = self.normal_equations(period)
            try:
                return scipy.linalg.solve(a, r, assume_a="pos")  # type: ignore[no-any-return]
            except np.linalg.LinAlgError as e:
                raise NonIdentifiableError(
                    f"theta is not identifiable at T={period}: {e}", period=period
                ) from e
        x0 = self.p_ref.theta if start is None else as_vector(start, "start")
        result = optimize.minimize(
            lambda th: -self.value(th, period),
            x0=x0,
            jac=lambda th: -self.gradient_theta(th, period),
            method="BFGS",
        )
        if not result.success:
            logger.warning(f"theta search at T={period} did not converge: {result.message}")
        return np.asarray(result.x, dtype=np.float64)

    def profile(self, period: float) -> float:
        return self.value(self.theta_hat(period), period)

    def hessian(self, theta: FloatArray, period: float, period_step: float) -> FloatArray:
        """Central-difference Hessian in (theta, T)."""
        x = np.append(theta, period)
        steps = np.append(1e-3 * np.maximum(1.0, np.abs(theta)), period_step)

        def fn(v: FloatArray) -> float:
            return self.value(v[:-1], float(v[-1]))

        size = x.size
        out = np.empty((size, size))
        f0 = fn(x)
        for i in range(size):
            e_i = np.zeros(size)
            e_i[i] = steps[i]
            out[i, i] = (fn(x + e_i) - 2 * f0 + fn(x - e_i)) / steps[i] ** 2
            for j in range(i):
                e_j = np.zeros(size)
                e_j[j] = steps[j]
                out[i, j] = out[j, i] = (
                    fn(x + e_i + e_j) - fn(x + e_i - e_j) - fn(x - e_i + e_j) + fn(x - e_i - e_j)
                ) / (4 * steps[i] * steps[j])
        return out


class MleReport(BaseModel):
    theta: list[float]
    period: float
    log_lr: float
    hessian: list[list[float]]
    standard_errors: list[float] | None = None
    at_boundary: bool = False
    window: tuple[float, float]
    nodes: int
    evaluations: int


def mle_joint(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p_init: ParamPoint,
    search: SearchConfig | None = None,
) -> tuple[ParamPoint, MleReport]:
    """Maximise logLR(.; p_init) over (theta, T).

    A grid over the T-window, the theta-profile at every node (a linear solve
    for signals affine in theta) and one golden-section refinement around the
    best node.
    """
    search = search or SearchConfig()
    n = z_traj.horizon
    objective = ProfileLikelihood(z_traj, model, signal, p_init)
    lower, upper, nodes = search.window(p_init.period, n)
    grid = np.linspace(lower, upper, nodes)
    values = np.array([objective.profile(float(period)) for period in grid])
    best = int(np.argmax(values))
    spread = float(values[best] - np.min(values))
    if spread <= search.flat_tolerance * max(1.0, abs(float(values[best]))):
        raise NonIdentifiableError(
            "log-likelihood is flat over the T-window", window=[lower, upper], spread=spread
        )
    period_hat, value = float(grid[best]), float(values[best])
    at_boundary = best in (0, nodes - 1)
    if at_boundary:
        logger.warning(
            f"MLE of T is at the window boundary {period_hat:.8g} of [{lower:.8g}, {upper:.8g}]"
        )
    else:
        try:
            result = optimize.minimize_scalar(
                lambda period: -objective.profile(period),
                bracket=(grid[best - 1], grid[best], grid[best + 1]),
                method="golden",
                options={"xtol": search.xtol},
            )
            if result.success and -result.fun >= value:
                period_hat, value = float(result.x), float(-result.fun)
        except ValueError as e:
            logger.debug(f"Golden-section refinement skipped: {e}")
    theta_hat = objective.theta_hat(period_hat)
    hessian = objective.hessian(theta_hat, period_hat, period_step=(upper - lower) / (nodes - 1))
    standard_errors = None
    information = -hessian
    if np.all(np.linalg.eigvalsh(0.5 * (information + information.T)) > 0):
        standard_errors = np.sqrt(np.diag(np.linalg.inv(information))).tolist()
    estimate = ParamPoint(theta=theta_hat, period=period_hat)
    report = MleReport(
        theta=theta_hat.tolist(),
        period=period_hat,
        log_lr=value,
        hessian=hessian.tolist(),
        standard_errors=standard_errors,
        at_boundary=at_boundary,
        window=(lower, upper),
        nodes=nodes,
        evaluations=objective.evaluations,
    )
    logger.info(f"MLE over horizon {n}: theta={theta_hat.tolist()}, T={period_hat:.10g}")
    return estimate, report


@dataclass(frozen=True, eq=False)
class ReplicationJob:
    """One independent path of an experiment, keyed by (seed, replication)."""

    model: DiffusionModel
    signal: SignalModel
    p: ParamPoint
    z0: FloatArray
    horizon: float
    step: float
    seed: int
    replication: int

    def simulate(self) -> Trajectory:
        return simulate_external(
            self.model, self.signal, self.p, self.z0, self.horizon, self.step, self.seed, self.replication
        )


def _jobs(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    z0: ArrayLike | None,
    horizon: float,
    step: float,
    seed: int,
    replications: int,
) -> list[ReplicationJob]:
    if replications < 2:
        raise UsageError(f"an experiment needs at least 2 replications, got {replications}")
    if replications < MIN_REPLICATIONS:
        logger.warning(f"{replications} replications is below the recommended {MIN_REPLICATIONS}")
    start = np.zeros(model.dim_n) if z0 is None else as_vector(z0, "z0")
    return [
        ReplicationJob(model, signal, p, start, horizon, step, seed, j) for j in range(replications)
    ]


def _checked_horizons(n_list: Sequence[float]) -> list[float]:
    values = [float(n) for n in n_list]
    if not values:
        raise UsageError("n_list must not be empty")
    if any(b <= a for a, b in zip(values, values[1:])) or values[0] <= 0:
        raise UsageError(f"n_list must be positive and increasing, got {values}")
    return values


def _score_job(
    job: ReplicationJob, n: float, estimate_fisher: bool
) -> tuple[FloatArray, FloatArray | None]:
    path = job.simulate()
    score = score_statistic(path, job.model, job.signal, job.p, n)
    if not estimate_fisher:
        return score, None
    fisher = fisher_matrix(path, job.model, job.signal, job.p, t=1.0)
    return score, np.asarray(fisher.entries)


class ScoreCovarianceReport(BaseModel):
    """Sample moments of the score against the Fisher information."""

    n: float
    replications: int
    seed: int
    labels: list[str]
    mean: list[float]
    mean_se: list[float]
    covariance: list[list[float]]
    covariance_se: list[list[float]]
    reference: list[list[float]]
    reference_source: str
    skewness: list[float]
    skewness_se: float
    kurtosis: list[float]
    kurtosis_se: float
    mean_within_3se: bool
    covariance_within_3se: bool
    kurtosis_within_3se: list[bool]
    rows: list[dict[str, float]] = Field(default_factory=list, exclude=True)


def _within(values: FloatArray, target: FloatArray, se: FloatArray | float, width: float = 3.0) -> FloatArray:
    return np.abs(values - target) <= width * np.asarray(se)  # type: ignore[no-any-return]


def score_covariance_experiment(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    n: float,
    replications: int,
    seed: int,
    runner: ReplicationRunner | None = None,
    z0: ArrayLike | None = None,
    step: float = DEFAULT_STEP,
    reference: FisherMatrix | None = None,
) -> ScoreCovarianceReport:
    """Score on independent paths of horizon n versus I(1).

    Without a ``reference`` the score covariance is compared to the mean of
    the per-path ergodic estimates of I(1).
    """
    runner = runner or SequentialRunner()
    jobs = _jobs(model, signal, p, z0, n, step, seed, replications)
    results = runner.map(partial(_score_job, n=n, estimate_fisher=reference is None), jobs)
    scores = np.stack([score for score, _ in results])
    count = scores.shape[0]
    labels = parameter_labels(p.dim_theta)

    mean = scores.mean(axis=0)
    mean_se = scores.std(axis=0, ddof=1) / math.sqrt(count)
    centred = scores - mean
    covariance = centred.T @ centred / (count - 1)
    products = centred[:, :, None] * centred[:, None, :]
    covariance_se = products.std(axis=0, ddof=1) / math.sqrt(count)
    if reference is not None:
        target, source = np.asarray(reference.entries), "oracle"
    else:
        estimates = [entries for _, entries in results if entries is not None]
        target, source = np.mean(estimates, axis=0), "ergodic"
    skewness = stats.skew(scores, axis=0, bias=False)
    kurtosis = stats.kurtosis(scores, axis=0, fisher=False, bias=False)
    kurtosis_se = math.sqrt(24.0 / count)

    rows = [
        {"replication": j, "n": n, **{f"score_{label}": float(v) for label, v in zip(labels, score)}}
        for j, score in enumerate(scores)
    ]
    report = ScoreCovarianceReport(
        n=n,
        replications=count,
        seed=seed,
        labels=labels,
        mean=mean.tolist(),
        mean_se=mean_se.tolist(),
        covariance=covariance.tolist(),
        covariance_se=covariance_se.tolist(),
        reference=target.tolist(),
        reference_source=source,
        skewness=np.atleast_1d(skewness).tolist(),
        skewness_se=math.sqrt(6.0 / count),
        kurtosis=np.atleast_1d(kurtosis).tolist(),
        kurtosis_se=kurtosis_se,
        mean_within_3se=bool(np.all(_within(mean, np.zeros_like(mean), mean_se))),
        covariance_within_3se=bool(np.all(_within(covariance, target, covariance_se))),
        kurtosis_within_3se=_within(np.atleast_1d(kurtosis), np.full(len(labels), 3.0), kurtosis_se).tolist(),
        rows=rows,
    )
    logger.info(
        f"Score covariance at n={n} over {count} replications: mean within 3 SE "
        f"{report.mean_within_3se}, covariance within 3 SE {report.covariance_within_3se}"
    )
    return report


def _remainder_job(
    job: ReplicationJob, h: tuple[float, ...], n_list: tuple[float, ...], reference: FisherMatrix | None
) -> list[LanDecomposition]:
    path = job.simulate()
    return [
        lan_decomposition(path, job.model, job.signal, job.p, h, n, fisher=reference) for n in n_list
    ]


class RemainderRow(BaseModel):
    n: float
    median_abs: float
    p90_abs: float


class RemainderDecayReport(BaseModel):
    h: list[float]
    replications: int
    seed: int
    table: list[RemainderRow]
    monotone_decrease: bool
    rows: list[dict[str, float]] = Field(default_factory=list, exclude=True)


def remainder_decay_experiment(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    h: ArrayLike,
    n_list: Sequence[float],
    replications: int,
    seed: int,
    runner: ReplicationRunner | None = None,
    z0: ArrayLike | None = None,
    step: float = DEFAULT_STEP,
    reference: FisherMatrix | None = None,
) -> RemainderDecayReport:
    """Median and 90th percentile of |remainder| per horizon.

    Each replication simulates one path to the largest horizon and decomposes
    its restrictions.
    """
    horizons = _checked_horizons(n_list)
    vec = as_vector(h, "h")
    runner = runner or SequentialRunner()
    jobs = _jobs(model, signal, p, z0, horizons[-1], step, seed, replications)
    results = runner.map(
        partial(_remainder_job, h=tuple(vec.tolist()), n_list=tuple(horizons), reference=reference),
        jobs,
    )
    remainders = np.array([[d.remainder for d in decompositions] for decompositions in results])
    magnitude = np.abs(remainders)
    medians = np.median(magnitude, axis=0)
    table = [
        RemainderRow(n=n, median_abs=float(medians[i]), p90_abs=float(np.percentile(magnitude[:, i], 90)))
        for i, n in enumerate(horizons)
    ]
    rows = [
        {
            "replication": j,
            "n": d.n,
            "log_lr": d.log_lr,
            "linear_term": d.linear_term,
            "quadratic_term": d.quadratic_term,
            "remainder": d.remainder,
        }
        for j, decompositions in enumerate(results)
        for d in decompositions
    ]
    monotone = bool(np.all(np.diff(medians) < 0)) if len(horizons) > 1 else True
    logger.info(f"Remainder medians {medians.tolist()} along n={horizons}; decreasing: {monotone}")
    return RemainderDecayReport(
        h=vec.tolist(),
        replications=len(results),
        seed=seed,
        table=table,
        monotone_decrease=monotone,
        rows=rows,
    )


def _rate_job(
    job: ReplicationJob, n_list: tuple[float, ...], search: SearchConfig
) -> list[FloatArray | str]:
    path = job.simulate()
    out: list[FloatArray | str] = []
    for n in n_list:
        try:
            estimate, _ = mle_joint(path.truncate(n), job.model, job.signal, job.p, search)
            out.append(estimate.as_vector())
        except LanLabError as e:
            out.append(f"{e.__class__.__name__}: {e.message}")
    return out


class RateRow(BaseModel):
    n: float
    successes: int
    failures: int
    std_theta: list[float]
    std_period: float


class RateReport(BaseModel):
    replications: int
    seed: int
    table: list[RateRow]
    slope_theta: list[float | None]
    slope_period: float | None
    expected_slope_theta: float = -0.5
    expected_slope_period: float = -1.5
    scaled_std_theta: list[float]
    scaled_std_period: float
    reference_scaled_std: list[float] | None = None
    failure_messages: list[str] = []
    rows: list[dict[str, float | str]] = Field(default_factory=list, exclude=True)


def _loglog_slope(horizons: Sequence[float], stds: FloatArray) -> float | None:
    mask = np.isfinite(stds) & (stds > 0)
    if np.count_nonzero(mask) < 2:
        return None
    slope, _ = np.polyfit(np.log(np.asarray(horizons)[mask]), np.log(stds[mask]), 1)
    return float(slope)


def rate_experiment(
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    n_list: Sequence[float],
    replications: int,
    seed: int,
    runner: ReplicationRunner | None = None,
    z0: ArrayLike | None = None,
    step: float = DEFAULT_STEP,
    search: SearchConfig | None = None,
    reference: FisherMatrix | None = None,
) -> RateReport:
    """Spread of the joint MLE across replications and its log-log slopes in n.

    Failed fits are counted per horizon and excluded from the spreads.
    """
    horizons = _checked_horizons(n_list)
    runner = runner or SequentialRunner()
    jobs = _jobs(model, signal, p, z0, horizons[-1], step, seed, replications)
    results = runner.map(
        partial(_rate_job, n_list=tuple(horizons), search=search or SearchConfig()), jobs
    )
    truth = p.as_vector()
    labels = parameter_labels(p.dim_theta)
    table: list[RateRow] = []
    rows: list[dict[str, float | str]] = []
    failures: list[str] = []
    stds = np.full((len(horizons), truth.size), np.nan)
    for i, n in enumerate(horizons):
        estimates = []
        for j, per_n in enumerate(results):
            outcome = per_n[i]
            if isinstance(outcome, str):
                failures.append(f"replication {j}, n={n}: {outcome}")
                rows.append({"replication": j, "n": n, "error": outcome})
                continue
            estimates.append(outcome)
            rows.append(
                {"replication": j, "n": n, **{f"{label}_hat": float(v) for label, v in zip(labels, outcome)}}
            )
        if len(estimates) >= 2:
            stds[i] = np.std(np.stack(estimates) - truth, axis=0, ddof=1)
        table.append(
            RateRow(
                n=n,
                successes=len(estimates),
                failures=len(results) - len(estimates),
                std_theta=stds[i, :-1].tolist(),
                std_period=float(stds[i, -1]),
            )
        )
    if failures:
        logger.warning(f"{len(failures)} MLE fits failed and were excluded")
    largest = horizons[-1]
    reference_scaled = None
    if reference is not None:
        reference_scaled = np.sqrt(np.diag(reference.inverse())).tolist()
    return RateReport(
        replications=len(results),
        seed=seed,
        table=table,
        slope_theta=[_loglog_slope(horizons, stds[:, k]) for k in range(p.dim_theta)],
        slope_period=_loglog_slope(horizons, stds[:, -1]),
        scaled_std_theta=(math.sqrt(largest) * stds[-1, :-1]).tolist(),
        scaled_std_period=float(largest**1.5 * stds[-1, -1]),
        reference_scaled_std=reference_scaled,
        failure_messages=failures,
        rows=rows,
    )
