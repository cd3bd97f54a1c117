"""Ergodic estimation of the bilinear form B_G and the Fisher information.

For 1-periodic u, v the time average

    (k+1) / t^(k+1) * int_0^t s^k u(s/T)^T G^-1(Z_s) v(s/T) ds

converges to B_G[u, v] for every k >= 0. The Fisher matrix I(t) uses k=0 for
the theta-block, k=1 for the cross block and k=2 for the period entry.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from scipy.integrate import simpson

from .arrays import ArrayLike, FloatArray, as_matrix, as_vector
from .errors import InvariantViolationError
from .likelihood import inverse_and_root, inverse_covariance
from .models import DiffusionModel
from .signals import DEFAULT_POINTS_PER_PERIOD, ParamPoint, SignalModel, quadrature_grid
from .simulate import Trajectory

logger = logging.getLogger(__name__)

PeriodicFn = Callable[[FloatArray], FloatArray]
StateMatrixFn = Callable[[FloatArray], FloatArray]

KERNEL_WEIGHTS = (0, 1, 2)
SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10


def _path_nodes(z_traj: Trajectory, horizon: float) -> tuple[FloatArray, FloatArray, float]:
    """Left-point nodes s_j < horizon, the Z-states there, and the exact horizon used."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    path = z_traj.truncate(horizon)
    if path.n_steps < 1:
        raise ValueError(f"horizon {horizon} is shorter than one step {z_traj.step}")
    return path.times[:-1], path.z_block[:-1], path.horizon


def _weighted_sums(
    times: FloatArray, products: FloatArray, step: float, horizon: float, weights: tuple[int, ...]
) -> FloatArray:
    """(k+1)/t^(k+1) sum_j s_j^k products_j h for each k."""
    return np.stack(
        [
            (k + 1) / horizon ** (k + 1) * np.tensordot(times**k * step, products, axes=(0, 0))
            for k in weights
        ]
    )


def bilinear_form_estimate(
    z_traj: Trajectory,
    u: PeriodicFn,
    v: PeriodicFn,
    g: StateMatrixFn,
    p: ParamPoint,
    k: int,
    t: float,
) -> float:
    """Time average of u^T G^-1 v along the path with kernel weight s^k.

    Args:
        z_traj: Observed path; only its Z-columns are used.
        u: 1-periodic map from phases of shape (K,) to values (K, N).
        v: Same as ``u``.
        g: Map from states (K, N) to symmetric positive-definite (K, N, N).
        p: Parameter whose period converts time to phase.
        k: Kernel exponent, k >= 0.
        t: Horizon, at most the path horizon.

    Returns:
        The estimate of B_G[u, v].
    """
    if k < 0:
        raise ValueError(f"kernel exponent must be non-negative, got {k}")
    times, z, horizon = _path_nodes(z_traj, t)
    inverse, _ = inverse_and_root(np.asarray(g(z), dtype=np.float64))
    phases = times / p.period
    integrand = np.einsum("ki,kij,kj->k", u(phases), inverse, v(phases))
    return float(_weighted_sums(times, integrand, z_traj.step, horizon, (k,))[0])


def bilinear_forms(
    z_traj: Trajectory,
    funcs: PeriodicFn,
    inverse_g: FloatArray | StateMatrixFn,
    p: ParamPoint,
    horizon: float,
    weights: tuple[int, ...] = KERNEL_WEIGHTS,
) -> FloatArray:
    """Estimates of B[u_i, u_j] for every kernel weight, in one pass over the path.

    ``funcs`` maps phases (K,) to the stacked functions (K, N, F);
    ``inverse_g`` is G^-1 at the left-point nodes (K, N, N) or a callable
    producing it from the Z-states. Returns an array of shape (len(weights), F, F).
    """
    times, z, used = _path_nodes(z_traj, horizon)
    if callable(inverse_g):
        inverse = np.asarray(inverse_g(z), dtype=np.float64)
    else:
        inverse = np.asarray(inverse_g, dtype=np.float64)[: times.size]
    values = funcs(times / p.period)
    products = np.einsum("kni,knm,kmj->kij", values, inverse, values)
    forms = _weighted_sums(times, products, z_traj.step, used, weights)
    return 0.5 * (forms + np.swapaxes(forms, -1, -2))  # type: ignore[no-any-return]


def derivative_functions(signal: SignalModel, theta: FloatArray) -> PeriodicFn:
    """Phase map to (d_theta_1 S, ..., d_theta_D S, S'), shape (K, N, D+1)."""

    def funcs(s: FloatArray) -> FloatArray:
        grad = signal.grad_theta(theta, s)
        deriv = signal.time_deriv(theta, s)
        return np.concatenate([grad, deriv[..., None]], axis=-1)

    return funcs


@dataclass(frozen=True)
class FisherForms:
    """The three bilinear forms the Fisher matrix is built from.

    ``theta_block`` = B[d_theta S, d_theta S] (k=0), ``cross`` = B[d_theta S, S']
    (k=1), ``period`` = B[S', S'] (k=2).
    """

    theta_block: FloatArray
    cross: FloatArray
    period: float
    horizon: float

    @classmethod
    def from_stack(cls, forms: FloatArray, horizon: float) -> "FisherForms":
        d = forms.shape[-1] - 1
        return cls(
            theta_block=forms[0, :d, :d].copy(),
            cross=forms[1, :d, d].copy(),
            period=float(forms[2, d, d]),
            horizon=horizon,
        )

    @property
    def dim_theta(self) -> int:
        return int(self.cross.size)

    def mixed(self) -> FloatArray:
        """[[B00, B01], [B01^T, B11]] with each block taken at its own weight."""
        d = self.dim_theta
        out = np.empty((d + 1, d + 1))
        out[:d, :d] = self.theta_block
        out[:d, d] = self.cross
        out[d, :d] = self.cross
        out[d, d] = self.period
        return out

    def to_dict(self) -> dict[str, object]:
        return {
            "theta_block": self.theta_block.tolist(),
            "cross": self.cross.tolist(),
            "period": self.period,
            "horizon": self.horizon,
        }


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """I(t) or, with ``derivative`` set, I'(t)."""

    entries: FloatArray
    t: float
    derivative: bool = False

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"Fisher matrix must be square, got shape {entries.shape}")
        scale = max(float(np.max(np.abs(entries))), 1.0)
        if np.max(np.abs(entries - entries.T)) > SYMMETRY_TOLERANCE * scale:
            raise InvariantViolationError("Fisher matrix is not symmetric")
        entries = 0.5 * (entries + entries.T)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.min_eigenvalue < -PSD_TOLERANCE * max(abs(self.trace), 1e-300):
            logger.warning(
                f"Estimated {'derivative of the ' if self.derivative else ''}Fisher matrix "
                f"is indefinite (min eigenvalue {self.min_eigenvalue:.3g})"
            )

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    @property
    def eigenvalues(self) -> FloatArray:
        return np.linalg.eigvalsh(self.entries)  # type: ignore[no-any-return]

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def inverse(self) -> FloatArray:
        return np.linalg.inv(self.entries)  # type: ignore[no-any-return]

    def quadratic(self, h: ArrayLike) -> float:
        vec = as_vector(h, "h")
        return float(vec @ self.entries @ vec)

    def to_dict(self) -> dict[str, object]:
        return {
            "t": self.t,
            "derivative": self.derivative,
            "entries": self.entries.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def _prefactors(p: ParamPoint, t: float, derivative: bool) -> tuple[float, float, float]:
    period = p.period
    if derivative:
        return 1.0, -t / period**2, t**2 / period**4
    return t, -(t**2) / (2 * period**2), t**3 / (3 * period**4)


def assemble_fisher(forms: FisherForms, p: ParamPoint, t: float, derivative: bool = False) -> FisherMatrix:
    """Apply the t- and T-prefactors of I(t) (or I'(t)) to the bilinear forms."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if forms.dim_theta != p.dim_theta:
        raise ValueError(f"forms have dimension {forms.dim_theta}, parameter has {p.dim_theta}")
    a, c, e = _prefactors(p, t, derivative)
    d = forms.dim_theta
    entries = np.empty((d + 1, d + 1))
    entries[:d, :d] = a * forms.theta_block
    entries[:d, d] = c * forms.cross
    entries[d, :d] = c * forms.cross
    entries[d, d] = e * forms.period
    return FisherMatrix(entries=entries, t=t, derivative=derivative)


def fisher_forms(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    horizon: float | None = None,
) -> FisherForms:
    """Bilinear forms with G = sigma sigma^T, averaged over [0, horizon]."""
    used = z_traj.horizon if horizon is None else horizon
    times, z, _ = _path_nodes(z_traj, used)
    inverse, _ = inverse_covariance(model, z)
    stack = bilinear_forms(z_traj, derivative_functions(signal, p.theta), inverse, p, used)
    logger.debug(f"Estimated bilinear forms over horizon {used} ({times.size} nodes)")
    return FisherForms.from_stack(stack, horizon=used)


def fisher_matrix(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    t: float,
    horizon: float | None = None,
    forms: FisherForms | None = None,
) -> FisherMatrix:
    """Ergodic estimate of I(t).

    The bilinear forms are averaged over ``horizon`` (default: the whole
    path); ``t`` only enters through the prefactors, so I(1) can be estimated
    from a long path.
    """
    if forms is None:
        forms = fisher_forms(z_traj, model, signal, p, horizon)
    return assemble_fisher(forms, p, t)


def fisher_derivative(
    z_traj: Trajectory,
    model: DiffusionModel,
    signal: SignalModel,
    p: ParamPoint,
    t: float,
    horizon: float | None = None,
    forms: FisherForms | None = None,
) -> FisherMatrix:
    """I'(t), checked against I(t) through int_0^t I'(s) ds = I(t)."""
    if forms is None:
        forms = fisher_forms(z_traj, model, signal, p, horizon)
    derivative = assemble_fisher(forms, p, t, derivative=True)
    gap = integration_gap(forms, p, t)
    scale = max(float(np.max(np.abs(assemble_fisher(forms, p, t).entries))), 1e-300)
    if gap > 1e-12 * max(scale, 1.0):
        raise InvariantViolationError(
            "integrated derivative does not reproduce the Fisher matrix", gap=gap
        )
    return derivative


def integration_gap(forms: FisherForms, p: ParamPoint, t: float) -> float:
    """max |int_0^t I'(s) ds - I(t)|; Simpson on three nodes is exact for the prefactors."""
    nodes = np.array([0.0, 0.5 * t, t])
    values = np.stack([assemble_fisher(forms, p, s, derivative=True).entries for s in nodes])
    integral = simpson(values, x=nodes, axis=0)
    return float(np.max(np.abs(integral - assemble_fisher(forms, p, t).entries)))


def gramian(forms: FisherForms, p: ParamPoint, t: float) -> FloatArray:
    """Gram matrix of {d_theta S, -t T^-2 S'} under the estimated forms."""
    weights = np.append(np.ones(forms.dim_theta), -t / p.period**2)
    return weights[:, None] * forms.mixed() * weights[None, :]  # type: ignore[no-any-return]


class FisherInvertibilityReport(BaseModel):
    min_eigenvalue_fisher: float
    min_eigenvalue_derivative: float
    trace_fisher: float
    trace_derivative: float
    tolerance: float
    fisher_invertible: bool
    derivative_invertible: bool

    @property
    def passed(self) -> bool:
        return self.fisher_invertible and self.derivative_invertible


def check_s5prime(fisher: FisherMatrix, derivative: FisherMatrix, tol: float = 1e-9) -> FisherInvertibilityReport:
    """Invertibility of I(t) and I'(t), tested as positive definiteness."""
    if fisher.derivative or not derivative.derivative:
        raise ValueError("expected I(t) first and I'(t) second")
    fisher_min, derivative_min = fisher.min_eigenvalue, derivative.min_eigenvalue
    return FisherInvertibilityReport(
        min_eigenvalue_fisher=fisher_min,
        min_eigenvalue_derivative=derivative_min,
        trace_fisher=fisher.trace,
        trace_derivative=derivative.trace,
        tolerance=tol,
        fisher_invertible=fisher_min > tol * fisher.trace,
        derivative_invertible=derivative_min > tol * derivative.trace,
    )


def _differ(lhs: float, rhs: float, margin: float) -> bool:
    return abs(lhs - rhs) > margin * max(abs(lhs), abs(rhs))


class InvertibilityReport(BaseModel):
    """Both sides of the invertibility inequalities, keyed by the matrix they protect."""

    lhs: dict[str, float]
    rhs: dict[str, float]
    margin: float
    holds: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.holds.values())


def is_isotropic(cov: ArrayLike, rtol: float = 1e-12) -> bool:
    """Whether a constant covariance is a positive multiple of the identity."""
    matrix = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    scale = float(matrix[0, 0])
    identity = scale * np.eye(matrix.shape[0])
    return scale > 0 and bool(np.allclose(matrix, identity, rtol=0.0, atol=rtol * scale))


def check_fourier_invertibility(
    theta: ArrayLike, margin: float = 1e-9, covariance: ArrayLike | None = None
) -> InvertibilityReport:
    """sum_k k (theta_k^2 + theta_{d+k}^2) != alpha sum_k k^2 theta_{d+k}^2 for alpha in {3, 4}.

    Applies to the orthonormal finite Fourier expansion with sigma sigma^T = I.
    Both sides scale alike under G -> c G, so any positive multiple of the
    identity is accepted when ``covariance`` is given; anything else raises.
    """
    if covariance is not None and not is_isotropic(covariance):
        raise ValueError("the Fourier inequalities need sigma sigma^T proportional to the identity")
    vec = as_vector(theta, "theta")
    if vec.size % 2:
        raise ValueError(f"theta must have even length 2d, got {vec.size}")
    d = vec.size // 2
    k = np.arange(1, d + 1, dtype=np.float64)
    sin_part, cos_part = vec[:d], vec[d:]
    lhs = float(np.sum(k * (sin_part**2 + cos_part**2)))
    weight = float(np.sum(k**2 * cos_part**2))
    keys = {"alpha=3": 3.0, "alpha=4": 4.0}
    return InvertibilityReport(
        lhs={key: lhs for key in keys},
        rhs={key: alpha * weight for key, alpha in keys.items()},
        margin=margin,
        holds={key: _differ(lhs, alpha * weight, margin) for key, alpha in keys.items()},
    )


def orthonormal_invertibility(
    theta: ArrayLike, cross: ArrayLike, deriv: ArrayLike, margin: float = 1e-9
) -> InvertibilityReport:
    """Invertibility conditions for S_theta = sum theta_i phi_i with B-orthonormal phi_i.

    Args:
        theta: Coefficients, length D.
        cross: Matrix B[phi_i, phi_j'].
        deriv: Matrix B[phi_i', phi_j'].
        margin: Relative separation required between the two sides.

    Returns:
        The ``fisher`` condition (4/3 factor) and the ``derivative`` condition.
    """
    vec = as_vector(theta, "theta")
    cross_m = as_matrix(cross, vec.size)
    deriv_m = as_matrix(deriv, vec.size)
    quadratic = float(vec @ deriv_m @ vec)
    projected = float(np.sum((cross_m @ vec) ** 2))
    lhs = {"fisher": 4.0 / 3.0 * quadratic, "derivative": quadratic}
    return InvertibilityReport(
        lhs=lhs,
        rhs={"fisher": projected, "derivative": projected},
        margin=margin,
        holds={key: _differ(value, projected, margin) for key, value in lhs.items()},
    )


def oracle_forms(
    signal: SignalModel,
    p: ParamPoint,
    cov: ArrayLike,
    quad_points: int = DEFAULT_POINTS_PER_PERIOD,
) -> FisherForms:
    """Bilinear forms for constant sigma sigma^T: int_0^1 u^T (sigma sigma^T)^-1 v ds."""
    n = signal.dim_n
    inverse, _ = inverse_and_root(as_matrix(cov, n))
    s = quadrature_grid(0.0, 1.0, quad_points)
    values = derivative_functions(signal, p.theta)(s)
    integrand = np.einsum("kni,nm,kmj->kij", values, inverse, values)
    gram = simpson(integrand, x=s, axis=0)
    gram = 0.5 * (gram + gram.T)
    return FisherForms.from_stack(np.stack([gram, gram, gram]), horizon=math.inf)


def constant_volatility_oracle(
    signal: SignalModel,
    p: ParamPoint,
    cov: ArrayLike,
    t: float = 1.0,
    derivative: bool = False,
    quad_points: int = DEFAULT_POINTS_PER_PERIOD,
) -> FisherMatrix:
    """Closed-form I(t) (or I'(t)) when sigma sigma^T does not depend on the state."""
    return assemble_fisher(oracle_forms(signal, p, cov, quad_points), p, t, derivative)
