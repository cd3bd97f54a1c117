"""Parametric periodic signals and numeric checks of their regularity.

A signal is a 1-periodic shape ``S_theta(s)``; the observed input is
``S_(theta,T)(t) = S_theta(t / T)``. All evaluators are vectorised over the
time argument: an array of shape ``(K,)`` gives ``(K, N)`` values, a scalar
gives ``(N,)``.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel
from scipy.integrate import simpson

from .arrays import ArrayLike, FloatArray, as_vector
from .errors import QuadratureError, SignalEvaluationError

logger = logging.getLogger(__name__)

DEFAULT_POINTS_PER_PERIOD = 4096


@dataclass(frozen=True, eq=False)
class ParamPoint:
    """The parameter (theta, T) indexing the statistical experiment."""

    theta: FloatArray
    period: float

    def __post_init__(self) -> None:
        theta = as_vector(self.theta, "theta").copy()
        if theta.size < 1:
            raise ValueError("theta must have at least one component")
        if not np.all(np.isfinite(theta)):
            raise ValueError(f"theta must be finite, got {theta}")
        if not (math.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive, got {self.period}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "period", float(self.period))

    @property
    def dim_theta(self) -> int:
        return int(self.theta.size)

    def as_vector(self) -> FloatArray:
        """Stack (theta, T) into one vector of length D+1."""
        return np.append(self.theta, self.period)

    @classmethod
    def from_vector(cls, vector: ArrayLike) -> "ParamPoint":
        v = as_vector(vector, "parameter")
        return cls(theta=v[:-1], period=float(v[-1]))

    def shifted(self, delta: ArrayLike) -> "ParamPoint":
        return ParamPoint.from_vector(self.as_vector() + as_vector(delta, "delta"))

    def same_as(self, other: "ParamPoint") -> bool:
        return self.period == other.period and np.array_equal(self.theta, other.theta)

    def to_dict(self) -> dict[str, object]:
        return {"theta": self.theta.tolist(), "period": self.period}


@runtime_checkable
class SignalModel(Protocol):
    """A 1-periodic parametric shape with its theta-gradient and s-derivative."""

    @property
    def dim_n(self) -> int: ...

    @property
    def dim_theta(self) -> int: ...

    def eval(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        """S_theta(s), shape ``s.shape + (N,)``."""
        ...

    def grad_theta(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        """D_theta S_theta(s), shape ``s.shape + (N, D)``."""
        ...

    def time_deriv(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        """S'_theta(s), shape ``s.shape + (N,)``."""
        ...


@dataclass(frozen=True, eq=False)
class FourierSignal:
    """Finite trigonometric signal with affine coefficient maps.

    ``S_theta(s) = sum_k sin(2 k pi s) G_k(theta) + cos(2 k pi s) H_k(theta)``
    with ``G_k(theta) = A_k theta + a_k`` and ``H_k(theta) = B_k theta + b_k``.
    """

    harmonics: FloatArray
    sin_linear: FloatArray
    cos_linear: FloatArray
    sin_offset: FloatArray = field(default_factory=lambda: np.zeros(0))
    cos_offset: FloatArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        harmonics = as_vector(self.harmonics, "harmonics")
        sin_linear = np.asarray(self.sin_linear, dtype=np.float64)
        cos_linear = np.asarray(self.cos_linear, dtype=np.float64)
        if sin_linear.ndim != 3 or sin_linear.shape != cos_linear.shape:
            raise ValueError("sin_linear and cos_linear must share shape (d, N, D)")
        if sin_linear.shape[0] != harmonics.size:
            raise ValueError("one coefficient block per harmonic is required")
        if np.any(harmonics < 1) or np.any(harmonics != np.round(harmonics)):
            raise ValueError(f"harmonic indices must be positive integers, got {harmonics}")
        shape = sin_linear.shape[:2]
        sin_offset = np.asarray(self.sin_offset, dtype=np.float64)
        cos_offset = np.asarray(self.cos_offset, dtype=np.float64)
        if sin_offset.size == 0:
            sin_offset = np.zeros(shape)
        if cos_offset.size == 0:
            cos_offset = np.zeros(shape)
        if sin_offset.shape != shape or cos_offset.shape != shape:
            raise ValueError(f"offsets must have shape {shape}")
        for name, value in (
            ("harmonics", harmonics),
            ("sin_linear", sin_linear),
            ("cos_linear", cos_linear),
            ("sin_offset", sin_offset),
            ("cos_offset", cos_offset),
        ):
            value = value.copy()
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim_n(self) -> int:
        return int(self.sin_linear.shape[1])

    @property
    def dim_theta(self) -> int:
        return int(self.sin_linear.shape[2])

    def _phases(self, s: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
        s_arr = np.asarray(s, dtype=np.float64)
        omega = 2.0 * np.pi * self.harmonics
        angle = s_arr[..., None] * omega
        return np.sin(angle), np.cos(angle), omega

    def coefficients(self, theta: FloatArray) -> tuple[FloatArray, FloatArray]:
        """G_k(theta) and H_k(theta), each of shape (d, N)."""
        g = np.einsum("knd,d->kn", self.sin_linear, theta) + self.sin_offset
        h = np.einsum("knd,d->kn", self.cos_linear, theta) + self.cos_offset
        return g, h

    def eval(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        sin, cos, _ = self._phases(s)
        g, h = self.coefficients(np.asarray(theta, dtype=np.float64))
        return sin @ g + cos @ h  # type: ignore[no-any-return]

    def grad_theta(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        sin, cos, _ = self._phases(s)
        return np.einsum("...k,knd->...nd", sin, self.sin_linear) + np.einsum(  # type: ignore[no-any-return]
            "...k,knd->...nd", cos, self.cos_linear
        )

    def time_deriv(self, theta: FloatArray, s: ArrayLike) -> FloatArray:
        sin, cos, omega = self._phases(s)
        g, h = self.coefficients(np.asarray(theta, dtype=np.float64))
        return (cos * omega) @ g - (sin * omega) @ h  # type: ignore[no-any-return]

    @classmethod
    def from_table(
        cls,
        rows: Sequence[tuple[int, ArrayLike, ArrayLike]],
        dim_theta: int,
        offsets: Sequence[tuple[ArrayLike, ArrayLike]] | None = None,
    ) -> "FourierSignal":
        """Build from (harmonic index, G row, H row) triples.

        A flat G/H row of length D describes an N=1 signal; a nested row is the
        full ``N x D`` matrix of the harmonic.
        """
        if not rows:
            raise ValueError("a Fourier signal needs at least one harmonic")
        harmonics = [float(k) for k, _, _ in rows]
        sin_blocks = [np.atleast_2d(np.asarray(g, dtype=np.float64)) for _, g, _ in rows]
        cos_blocks = [np.atleast_2d(np.asarray(h, dtype=np.float64)) for _, _, h in rows]
        for block in (*sin_blocks, *cos_blocks):
            if block.shape[-1] != dim_theta:
                raise ValueError(f"coefficient row has {block.shape[-1]} entries, expected {dim_theta}")
        sin_offset: FloatArray = np.zeros(0)
        cos_offset: FloatArray = np.zeros(0)
        if offsets is not None:
            sin_offset = np.array([np.atleast_1d(a) for a, _ in offsets], dtype=np.float64)
            cos_offset = np.array([np.atleast_1d(b) for _, b in offsets], dtype=np.float64)
        return cls(
            harmonics=np.array(harmonics),
            sin_linear=np.stack(sin_blocks),
            cos_linear=np.stack(cos_blocks),
            sin_offset=sin_offset,
            cos_offset=cos_offset,
        )


def sine_signal(dim_theta: int = 1) -> FourierSignal:
    """``sum_k theta_k sin(2 k pi s)``; with D=1 this is the benchmark theta*sin(2 pi s)."""
    eye = np.eye(dim_theta)
    rows = [(k + 1, eye[k], np.zeros(dim_theta)) for k in range(dim_theta)]
    return FourierSignal.from_table(rows, dim_theta)


def fourier_expansion_signal(d: int) -> FourierSignal:
    """Orthonormal finite expansion ``sum_k sqrt2 (theta_k sin + theta_{d+k} cos)``."""
    if d < 1:
        raise ValueError("the expansion needs at least one harmonic")
    eye = np.eye(2 * d) * math.sqrt(2.0)
    rows = [(k + 1, eye[k], eye[d + k]) for k in range(d)]
    return FourierSignal.from_table(rows, 2 * d)


def _checked(values: FloatArray, what: str) -> FloatArray:
    if not np.all(np.isfinite(values)):
        raise SignalEvaluationError(f"signal {what} produced non-finite values")
    return values


def eval_signal(signal: SignalModel, p: ParamPoint, t: ArrayLike) -> FloatArray:
    """S_(theta,T)(t) = S_theta(t / T)."""
    t_arr = np.asarray(t, dtype=np.float64)
    return _checked(signal.eval(p.theta, t_arr / p.period), "evaluation")


def eval_sdot(signal: SignalModel, p: ParamPoint, t: ArrayLike) -> FloatArray:
    """The (theta, T)-derivative of S_(theta,T)(t), shape ``t.shape + (N, D+1)``.

    The last column is ``-t T^-2 S'_theta(t / T)``.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    s = t_arr / p.period
    grad = signal.grad_theta(p.theta, s)
    period_col = -(t_arr / p.period**2)[..., None] * signal.time_deriv(p.theta, s)
    return _checked(np.concatenate([grad, period_col[..., None]], axis=-1), "derivative")


def quadrature_grid(start: float, stop: float, intervals: int) -> FloatArray:
    """Nodes for composite Simpson; the interval count is rounded up to even."""
    if stop <= start:
        raise QuadratureError(f"empty quadrature range [{start}, {stop}]")
    intervals = max(2, intervals + (intervals % 2))
    return np.linspace(start, stop, intervals + 1)


def _horizon_grid(p: ParamPoint, horizon: float, points_per_period: int) -> FloatArray:
    if horizon <= 0:
        raise QuadratureError(f"horizon must be positive, got {horizon}")
    intervals = math.ceil(horizon / p.period * points_per_period)
    return quadrature_grid(0.0, horizon, intervals)


def _displacements(displacements: Sequence[float] | None) -> list[float]:
    values = list(displacements) if displacements is not None else [10.0**-k for k in range(1, 7)]
    if not values:
        raise QuadratureError("displacement sequence must not be empty")
    return values


class DifferentiabilityReport(BaseModel):
    """Difference quotients along each coordinate axis of (theta, T).

    ``ratios`` are relative to ``scales``, the squared L2 norm of the
    axis derivative over the window.
    """

    displacements: list[float]
    ratios: list[list[float]]
    scales: list[float]
    tolerance: float
    passed: bool


def check_l2_differentiability(
    signal: SignalModel,
    p: ParamPoint,
    horizon: float,
    tol: float = 1e-6,
    displacements: Sequence[float] | None = None,
    points_per_period: int = DEFAULT_POINTS_PER_PERIOD,
) -> DifferentiabilityReport:
    """Check L2_loc-differentiability of (theta, T) -> S_(theta,T) on [0, horizon].

    For each axis ``e_i`` and shrinking ``delta`` the quotient
    ``int |S_(p + delta e_i) - S_p - Sdot_p delta e_i|^2 ds / delta^2`` is
    computed by Simpson quadrature and divided by ``int |Sdot_p e_i|^2 ds``
    over the same window. The check passes when the relative quotient at the
    smallest displacement is below ``tol`` on every axis.
    """
    deltas = _displacements(displacements)
    grid = _horizon_grid(p, horizon, points_per_period)
    base = eval_signal(signal, p, grid)
    sdot = eval_sdot(signal, p, grid)
    ratios: list[list[float]] = []
    scales: list[float] = []
    for axis in range(p.dim_theta + 1):
        # a constant axis has a zero derivative; its quotient stays absolute
        scale = float(simpson(np.sum(sdot[..., axis] ** 2, axis=-1), x=grid)) or 1.0
        scales.append(scale)
        axis_ratios = []
        for delta in deltas:
            step = np.zeros(p.dim_theta + 1)
            step[axis] = delta
            moved = eval_signal(signal, p.shifted(step), grid)
            residual = moved - base - sdot[..., axis] * delta
            integral = simpson(np.sum(residual**2, axis=-1), x=grid)
            axis_ratios.append(float(integral) / delta**2 / scale)
        ratios.append(axis_ratios)
    passed = all(r[-1] < tol for r in ratios)
    logger.debug(f"Difference quotients at smallest displacement: {[r[-1] for r in ratios]}")
    return DifferentiabilityReport(
        displacements=deltas, ratios=ratios, scales=scales, tolerance=tol, passed=passed
    )


class ContinuityReport(BaseModel):
    displacements: list[float]
    distances: list[list[float]]
    tolerance: float
    passed: bool


def check_l2_continuity(
    signal: SignalModel,
    p: ParamPoint,
    horizon: float,
    tol: float = 1e-6,
    displacements: Sequence[float] | None = None,
    points_per_period: int = DEFAULT_POINTS_PER_PERIOD,
) -> ContinuityReport:
    """Check L2_loc-continuity of the derivative: ``int |Sdot_(p+delta) - Sdot_p|^2 ds -> 0``.

    Distances are relative to ``int |Sdot_p|^2 ds``.
    """
    deltas = _displacements(displacements)
    grid = _horizon_grid(p, horizon, points_per_period)
    sdot = eval_sdot(signal, p, grid)
    scale = float(simpson(np.sum(sdot**2, axis=(-2, -1)), x=grid)) or 1.0
    distances: list[list[float]] = []
    for axis in range(p.dim_theta + 1):
        axis_distances = []
        for delta in deltas:
            step = np.zeros(p.dim_theta + 1)
            step[axis] = delta
            moved = eval_sdot(signal, p.shifted(step), grid)
            integral = simpson(np.sum((moved - sdot) ** 2, axis=(-2, -1)), x=grid)
            axis_distances.append(float(integral) / scale)
        distances.append(axis_distances)
    passed = all(d[-1] < tol for d in distances)
    return ContinuityReport(
        displacements=deltas, distances=distances, tolerance=tol, passed=passed
    )


def gram_matrix(
    signal: SignalModel, theta: ArrayLike, quad_points: int = DEFAULT_POINTS_PER_PERIOD
) -> FloatArray:
    """L2([0,1]) Gram matrix of d_theta_1 S, ..., d_theta_D S, S'."""
    theta_vec = as_vector(theta, "theta")
    n_funcs = theta_vec.size + 1
    if quad_points < 2 * n_funcs:
        raise QuadratureError(
            f"{quad_points} quadrature points cannot resolve {n_funcs} functions",
            quad_points=quad_points,
        )
    s = quadrature_grid(0.0, 1.0, quad_points)
    funcs = np.concatenate(
        [signal.grad_theta(theta_vec, s), signal.time_deriv(theta_vec, s)[..., None]], axis=-1
    )
    integrand = np.einsum("kni,knj->kij", funcs, funcs)
    gram = simpson(integrand, x=s, axis=0)
    return 0.5 * (gram + gram.T)  # type: ignore[no-any-return]


def check_linear_independence(
    signal: SignalModel, theta: ArrayLike, quad_points: int = DEFAULT_POINTS_PER_PERIOD
) -> float:
    """Smallest eigenvalue of the Gram matrix of the signal derivatives."""
    return float(np.linalg.eigvalsh(gram_matrix(signal, theta, quad_points))[0])


def is_linearly_independent(
    signal: SignalModel,
    theta: ArrayLike,
    quad_points: int = DEFAULT_POINTS_PER_PERIOD,
    rtol: float = 1e-10,
) -> bool:
    """Scale-free rank test: min eigenvalue above ``rtol`` times the largest."""
    eigenvalues = np.linalg.eigvalsh(gram_matrix(signal, theta, quad_points))
    return bool(eigenvalues[0] > rtol * max(eigenvalues[-1], 0.0))


def is_affine_in_theta(
    signal: SignalModel,
    theta: ArrayLike,
    points: int = 64,
    rtol: float = 1e-9,
) -> bool:
    """Whether ``S_(theta+d) = S_theta + D_theta S_theta d`` holds on a phase grid.

    Checked along every unit direction and along ``-(theta + 1) / 2``, so the
    test covers displacements that cross zero in each coordinate.
    """
    theta_vec = as_vector(theta, "theta")
    s = np.arange(points) / points
    base = signal.eval(theta_vec, s)
    grad = signal.grad_theta(theta_vec, s)
    directions = [*np.eye(theta_vec.size), -0.5 * (theta_vec + 1.0)]
    for direction in directions:
        shifted = signal.eval(theta_vec + direction, s)
        predicted = base + grad @ direction
        scale = max(float(np.max(np.abs(shifted))), float(np.max(np.abs(predicted))), 1.0)
        if float(np.max(np.abs(shifted - predicted))) > rtol * scale:
            logger.debug(f"signal departs from its tangent along {direction.tolist()}")
            return False
    return True


class HolderFit(BaseModel):
    """Fitted exponents of ``int |D S(theta,T~) - D S(theta,T)|^2 <= C t^beta |T~-T|^alpha``."""

    alpha_hat: float | None = None
    beta_hat: float | None = None
    log_constant: float | None = None
    period_invariant: bool = False
    integrals: list[list[float]] = []

    @property
    def within_bounds(self) -> bool:
        """alpha in (0, 2] and beta < 1 + 3 alpha / 2 (with fit slack on alpha <= 2)."""
        if self.period_invariant:
            return True
        if self.alpha_hat is None or self.beta_hat is None:
            return False
        return 0.0 < self.alpha_hat <= 2.05 and self.beta_hat < 1.0 + 1.5 * self.alpha_hat


def estimate_holder_exponents(
    signal: SignalModel,
    theta: ArrayLike,
    period: float,
    t_grid: Sequence[float],
    dT_grid: Sequence[float],
    t0: float = 0.0,
    points_per_period: int = DEFAULT_POINTS_PER_PERIOD,
) -> HolderFit:
    """Least-squares log-log fit of the local Hoelder condition on D_theta S.

    A diagnostic only; the constant, ``t0`` and the neighbourhood are not
    certified.
    """
    if not t_grid or not dT_grid:
        raise QuadratureError("t_grid and dT_grid must be nonempty")
    theta_vec = as_vector(theta, "theta")
    for dT in dT_grid:
        if not (0 < abs(dT) < period / 2):
            raise ValueError(f"period displacements must lie in (-T/2, T/2) \\ {{0}}, got {dT}")
    integrals = np.zeros((len(t_grid), len(dT_grid)))
    for i, t in enumerate(t_grid):
        grid = quadrature_grid(t0, t, math.ceil((t - t0) / period * points_per_period))
        reference = signal.grad_theta(theta_vec, grid / period)
        for j, dT in enumerate(dT_grid):
            moved = signal.grad_theta(theta_vec, grid / (period + dT))
            integrals[i, j] = simpson(np.sum((moved - reference) ** 2, axis=(-2, -1)), x=grid)
    table = integrals.tolist()
    positive = integrals > 0
    if not np.any(positive):
        logger.info("D_theta S does not depend on the period: exact T-invariance")
        return HolderFit(period_invariant=True, integrals=table)
    t_idx, dT_idx = np.nonzero(positive)
    log_t = np.log(np.asarray(t_grid, dtype=np.float64)[t_idx])
    log_dT = np.log(np.abs(np.asarray(dT_grid, dtype=np.float64)[dT_idx]))
    design = np.column_stack([np.ones_like(log_t), log_t, log_dT])
    coef, *_ = np.linalg.lstsq(design, np.log(integrals[positive]), rcond=None)
    return HolderFit(
        alpha_hat=float(coef[2]),
        beta_hat=float(coef[1]),
        log_constant=float(coef[0]),
        integrals=table,
    )


def check_periodicity(signal: SignalModel, theta: ArrayLike, grid: ArrayLike) -> float:
    """max |S_theta(s+1) - S_theta(s)| over the grid."""
    theta_vec = as_vector(theta, "theta")
    s = np.asarray(grid, dtype=np.float64)
    return float(np.max(np.abs(signal.eval(theta_vec, s + 1.0) - signal.eval(theta_vec, s))))


class GradientConsistency(BaseModel):
    theta_relative_error: float
    time_relative_error: float


def check_gradient_consistency(
    signal: SignalModel, theta: ArrayLike, grid: ArrayLike, eps: float = 1e-5
) -> GradientConsistency:
    """Relative error of the analytic derivatives against central differences."""
    theta_vec = as_vector(theta, "theta")
    s = np.asarray(grid, dtype=np.float64)
    grad = signal.grad_theta(theta_vec, s)
    numeric = np.empty_like(grad)
    for j in range(theta_vec.size):
        step = np.zeros_like(theta_vec)
        step[j] = eps
        numeric[..., j] = (
            signal.eval(theta_vec + step, s) - signal.eval(theta_vec - step, s)
        ) / (2 * eps)
    deriv = signal.time_deriv(theta_vec, s)
    numeric_deriv = (signal.eval(theta_vec, s + eps) - signal.eval(theta_vec, s - eps)) / (2 * eps)

    def rel(a: FloatArray, b: FloatArray) -> float:
        return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(a))), 1e-300))

    return GradientConsistency(
        theta_relative_error=rel(grad, numeric), time_relative_error=rel(deriv, numeric_deriv)
    )
